// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "fetinv/refmodel/physics.hpp"
#include "fetinv/refmodel/types.hpp"

namespace fetinv::refmodel {

/// Independent draw of every parameter from its range (uniform, or
/// log-uniform when the range is flagged). Reproducible for a given seed.
DeviceParams sample_params(const ParamRanges& ranges, std::uint64_t seed);

/// Seed of device `device_id` under a master seed.
std::uint64_t device_seed(std::uint64_t master_seed, std::uint64_t device_id) noexcept;

struct DeviceRecord {
  std::uint64_t device_id = 0;
  std::uint64_t seed = 0;
  IVCurveSet curves;  ///< curves.params holds the generating parameters

  const DeviceParams& params() const { return *curves.params; }
};

struct DatasetSpec {
  std::size_t count = 0;
  std::uint64_t master_seed = 0;
  std::uint64_t first_id = 0;
  ParamRanges ranges = default_ranges();
  BiasSpec bias = BiasSpec::standard();
  PhysicalConstants constants{};
  unsigned workers = 0;  ///< 0 = hardware concurrency
};

struct DeviceFailure {
  std::uint64_t device_id = 0;
  std::string message;
};

struct GeneratedDataset {
  std::vector<DeviceRecord> devices;  ///< ascending device_id, failures omitted
  std::vector<DeviceFailure> failures;
};

/// Samples and simulates `count` devices with ids first_id, first_id+1, ...
/// The result does not depend on the worker count.
GeneratedDataset generate_dataset(const DatasetSpec& spec);

inline constexpr const char* kGeneratorVersion = "fetinv-refmodel/1";

/// One row per (device, vds, vgs); values printed with 17 significant digits.
void write_dataset_csv(std::ostream& os, const std::vector<DeviceRecord>& devices);
void write_dataset_csv(const std::string& path, const std::vector<DeviceRecord>& devices);

/// Inverse of write_dataset_csv. Throws InputError on malformed rows.
std::vector<DeviceRecord> read_dataset_csv(std::istream& is);
std::vector<DeviceRecord> read_dataset_csv(const std::string& path);

/// Sidecar metadata (ranges, grid, constants, generator version) as JSON text.
std::string dataset_metadata_json(const DatasetSpec& spec, std::size_t failures = 0);

}  // namespace fetinv::refmodel
