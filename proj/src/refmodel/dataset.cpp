// SPDX-License-Identifier: Apache-2.0
#include "fetinv/refmodel/dataset.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <random>
#include <sstream>

#include <json.hpp>

#include "fetinv/error.hpp"
#include "fetinv/parallel.hpp"
#include "fetinv/seed.hpp"

namespace fetinv::refmodel {
namespace {

constexpr const char* kHeader =
    "device_id,seed,mu,phi_b0,n_c,n_d0,e_d_mid,sigma_d,n_a0,sigma_a,vds,vgs,id_uA_per_um";

void append_number(std::string& out, double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  out += buf;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) {
    const auto b = cell.find_first_not_of(" \t\r");
    const auto e = cell.find_last_not_of(" \t\r");
    cells.push_back(b == std::string::npos ? std::string() : cell.substr(b, e - b + 1));
  }
  return cells;
}

double parse_double(const std::string& s, std::size_t line_no) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size() || !std::isfinite(v))
    throw InputError("dataset CSV line " + std::to_string(line_no) + ": bad number '" + s + "'");
  return v;
}

std::uint64_t parse_u64(const std::string& s, std::size_t line_no) {
  char* end = nullptr;
  const unsigned long long v = std::strtoull(s.c_str(), &end, 10);
  if (s.empty() || end != s.c_str() + s.size())
    throw InputError("dataset CSV line " + std::to_string(line_no) + ": bad integer '" + s + "'");
  return v;
}

}  // namespace

DeviceParams sample_params(const ParamRanges& ranges, std::uint64_t seed) {
  validate_ranges(ranges);
  std::mt19937_64 rng(seed);
  std::array<double, kNumParams> v{};
  for (std::size_t i = 0; i < kNumParams; ++i) {
    const auto& r = ranges[i];
    if (r.lower == r.upper) {
      v[i] = r.lower;
      (void)rng();
      continue;
    }
    if (r.log_space) {
      std::uniform_real_distribution<double> u(std::log(r.lower), std::log(r.upper));
      v[i] = std::exp(u(rng));
    } else {
      std::uniform_real_distribution<double> u(r.lower, r.upper);
      v[i] = u(rng);
    }
    v[i] = std::clamp(v[i], r.lower, r.upper);
  }
  return DeviceParams::from_array(v);
}

std::uint64_t device_seed(std::uint64_t master_seed, std::uint64_t device_id) noexcept {
  return derive_seed(master_seed, "device", device_id);
}

GeneratedDataset generate_dataset(const DatasetSpec& spec) {
  validate_ranges(spec.ranges);
  spec.bias.validate();
  spec.constants.validate();

  std::vector<DeviceRecord> slots(spec.count);
  std::vector<std::string> errors(spec.count);
  parallel_for(spec.count, spec.workers, [&](std::size_t i) {
    DeviceRecord& rec = slots[i];
    rec.device_id = spec.first_id + i;
    rec.seed = device_seed(spec.master_seed, rec.device_id);
    const DeviceParams p = sample_params(spec.ranges, rec.seed);
    try {
      rec.curves = simulate_curves(p, spec.bias, spec.constants);
    } catch (const Error& e) {
      errors[i] = e.what();
    }
  });

  GeneratedDataset out;
  for (std::size_t i = 0; i < spec.count; ++i) {
    if (errors[i].empty()) {
      out.devices.push_back(std::move(slots[i]));
    } else {
      out.failures.push_back({spec.first_id + i, errors[i]});
    }
  }
  return out;
}

void write_dataset_csv(std::ostream& os, const std::vector<DeviceRecord>& devices) {
  std::string buf;
  buf += kHeader;
  buf += '\n';
  for (const auto& d : devices) {
    const auto pv = d.params().to_array();
    std::string prefix = std::to_string(d.device_id) + "," + std::to_string(d.seed);
    for (double v : pv) {
      prefix += ',';
      append_number(prefix, v);
    }
    for (std::size_t i = 0; i < d.curves.vds.size(); ++i) {
      for (std::size_t j = 0; j < d.curves.vgs.size(); ++j) {
        buf += prefix;
        buf += ',';
        append_number(buf, d.curves.vds[i]);
        buf += ',';
        append_number(buf, d.curves.vgs[j]);
        buf += ',';
        append_number(buf, d.curves.at(i, j));
        buf += '\n';
      }
    }
    os << buf;
    buf.clear();
  }
  os << buf;
}

void write_dataset_csv(const std::string& path, const std::vector<DeviceRecord>& devices) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw PersistenceError("cannot write dataset: " + path);
  write_dataset_csv(os, devices);
  if (!os) throw PersistenceError("write failed: " + path);
}

std::vector<DeviceRecord> read_dataset_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw InputError("dataset CSV is empty");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kHeader) throw InputError("dataset CSV header mismatch: '" + line + "'");

  struct Partial {
    std::uint64_t seed = 0;
    std::array<double, kNumParams> params{};
    std::map<double, std::map<double, double>> points;  // vds -> vgs -> id
  };
  std::map<std::uint64_t, Partial> devices;
  std::size_t line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto cells = split_csv(line);
    if (cells.size() != 13)
      throw InputError("dataset CSV line " + std::to_string(line_no) + ": expected 13 columns");
    const std::uint64_t id = parse_u64(cells[0], line_no);
    auto& dev = devices[id];
    dev.seed = parse_u64(cells[1], line_no);
    for (std::size_t k = 0; k < kNumParams; ++k) dev.params[k] = parse_double(cells[2 + k], line_no);
    const double vds = parse_double(cells[10], line_no);
    const double vgs = parse_double(cells[11], line_no);
    const double id_val = parse_double(cells[12], line_no);
    dev.points[vds][vgs] = id_val;
  }

  std::vector<DeviceRecord> out;
  out.reserve(devices.size());
  for (auto& [id, dev] : devices) {
    DeviceRecord rec;
    rec.device_id = id;
    rec.seed = dev.seed;
    rec.curves.params = DeviceParams::from_array(dev.params);
    for (const auto& [vds, row] : dev.points) {
      std::vector<double> vgs;
      for (const auto& [v, i] : row) {
        vgs.push_back(v);
        rec.curves.id.push_back(i);
      }
      if (rec.curves.vgs.empty()) {
        rec.curves.vgs = vgs;
      } else if (vgs != rec.curves.vgs) {
        throw InputError("dataset CSV: device " + std::to_string(id) + " has mismatched vgs grids");
      }
      rec.curves.vds.push_back(vds);
    }
    out.push_back(std::move(rec));
  }
  return out;
}

std::vector<DeviceRecord> read_dataset_csv(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw InputError("cannot open dataset: " + path);
  return read_dataset_csv(is);
}

std::string dataset_metadata_json(const DatasetSpec& spec, std::size_t failures) {
  nlohmann::ordered_json j;
  j["generator_version"] = kGeneratorVersion;
  j["count"] = spec.count;
  j["failures"] = failures;
  j["master_seed"] = spec.master_seed;
  j["first_id"] = spec.first_id;
  auto& ranges = j["ranges"];
  for (std::size_t i = 0; i < kNumParams; ++i) {
    ranges[std::string(kParamNames[i])] = {{"lower", spec.ranges[i].lower},
                                           {"upper", spec.ranges[i].upper},
                                           {"log_space", spec.ranges[i].log_space}};
  }
  j["vgs_grid"] = spec.bias.vgs_grid;
  j["vds_values"] = spec.bias.vds_values;
  const auto& c = spec.constants;
  j["constants"] = {{"k_b_t", c.k_b_t}, {"q", c.q},       {"c_ox", c.c_ox},       {"l_ch", c.l_ch},
                    {"v_fb", c.v_fb},   {"rho_c0", c.rho_c0}, {"n_floor", c.n_floor}, {"e_min", c.e_min},
                    {"ef_lo", c.ef_lo}, {"ef_hi", c.ef_hi}};
  return j.dump(2) + "\n";
}

}  // namespace fetinv::refmodel
