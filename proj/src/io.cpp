#include "bnr/io.hpp"

#include <nlohmann/json.hpp>
#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

namespace bnr {

using json = nlohmann::ordered_json;

namespace {

std::uint64_t to_le(std::uint64_t x) {
  if constexpr (std::endian::native == std::endian::big) {
    std::uint64_t y = 0;
    for (int i = 0; i < 8; ++i) y |= ((x >> (8 * i)) & 0xffu) << (8 * (7 - i));
    return y;
  }
  return x;
}

json parse_json(const fs::path& path) {
  try {
    return json::parse(read_text(path));
  } catch (const json::exception& e) {
    throw DataError(path.string() + ": malformed JSON: " + e.what());
  }
}

template <class T>
T field(const json& j, const char* key, const fs::path& path) {
  if (!j.contains(key)) throw DataError(path.string() + ": missing field '" + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw DataError(path.string() + ": field '" + key + "' has the wrong type");
  }
}

// JSON has no NaN; the writer emits null for non-finite values.
double real(const json& v, const fs::path& path) {
  if (v.is_null()) return std::numeric_limits<double>::quiet_NaN();
  if (!v.is_number()) throw DataError(path.string() + ": expected a number");
  return v.get<double>();
}

double real_field(const json& j, const char* key, const fs::path& path) {
  if (!j.contains(key)) throw DataError(path.string() + ": missing field '" + key + "'");
  return real(j.at(key), path);
}

std::vector<double> real_array(const json& j, const char* key, const fs::path& path) {
  if (!j.contains(key) || !j.at(key).is_array()) throw DataError(path.string() + ": field '" + key + "' must be an array");
  std::vector<double> out;
  for (const auto& v : j.at(key)) out.push_back(real(v, path));
  return out;
}

int exact_int(const json& j, const char* key, const fs::path& path) {
  const json& v = j.contains(key) ? j.at(key) : throw DataError(path.string() + ": missing field '" + key + "'");
  if (!v.is_number_integer()) throw DataError(path.string() + ": field '" + key + "' must be an integer");
  return v.get<int>();
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(std::move(cur));
  return out;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

template <class T>
T parse_number(const std::string& s, const fs::path& path, std::size_t row) {
  T v{};
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || ptr != end) {
    throw DataError(path.string() + ": row " + std::to_string(row) + ": cannot parse '" + s + "'");
  }
  return v;
}

json summary_json(const Summary& s) {
  return json{{"mean", s.mean}, {"sd", s.sd}, {"q025", s.q025}, {"q50", s.q50}, {"q975", s.q975}};
}

}  // namespace

std::string format_double(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, ptr);
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw IoError("failed writing " + path.string());
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_f64(const fs::path& path, const double* values, std::size_t n) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::vector<std::uint64_t> buf(n);
  for (std::size_t i = 0; i < n; ++i) buf[i] = to_le(std::bit_cast<std::uint64_t>(values[i]));
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(n * 8));
  if (!out) throw IoError("failed writing " + path.string());
}

std::vector<double> read_f64(const fs::path& path) {
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in) throw IoError("cannot open " + path.string());
  const auto bytes = static_cast<std::size_t>(in.tellg());
  if (bytes % 8 != 0) {
    throw LengthMismatchError(path.string() + ": " + std::to_string(bytes) + " bytes is not a multiple of 8");
  }
  in.seekg(0);
  std::vector<std::uint64_t> buf(bytes / 8);
  in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(bytes));
  std::vector<double> out(buf.size());
  for (std::size_t i = 0; i < buf.size(); ++i) out[i] = std::bit_cast<double>(to_le(buf[i]));
  return out;
}

void write_dataset(const BoldDataset& data, const fs::path& manifest) {
  data.validate();
  fs::path payload = manifest;
  payload.replace_extension(".bin");
  json vox = json::array();
  for (const auto& v : data.voxel_table()) {
    vox.push_back({{"id", v.id}, {"x", v.coord[0]}, {"y", v.coord[1]}, {"z", v.coord[2]}, {"roi", v.roi}});
  }
  json m{{"format", "bnr-dataset"},
         {"format_version", kDatasetFormatVersion},
         {"subjects", data.subjects()},
         {"voxels", data.voxels()},
         {"scans", data.scans()},
         {"tr", data.tr()},
         {"order", "subject,voxel,time"},
         {"byte_order", "little"},
         {"value_type", "float64"},
         {"data_file", payload.filename().string()},
         {"voxel_table", vox}};
  write_text(manifest, m.dump(2) + "\n");
  write_f64(payload, data.values().data(), data.values().size());
}

BoldDataset read_dataset(const fs::path& manifest) {
  const json m = parse_json(manifest);
  if (field<std::string>(m, "format", manifest) != "bnr-dataset") {
    throw DataError(manifest.string() + ": not a bnr-dataset manifest");
  }
  const int version = exact_int(m, "format_version", manifest);
  if (version != kDatasetFormatVersion) {
    throw VersionMismatchError(manifest.string() + ": format_version " + std::to_string(version) +
                               " is not supported (expected " + std::to_string(kDatasetFormatVersion) + ")");
  }
  if (field<std::string>(m, "byte_order", manifest) != "little") throw DataError(manifest.string() + ": byte_order must be little");
  if (field<std::string>(m, "value_type", manifest) != "float64") throw DataError(manifest.string() + ": value_type must be float64");
  if (m.contains("order") && m.at("order") != "subject,voxel,time") throw DataError(manifest.string() + ": unsupported order");
  const int S = exact_int(m, "subjects", manifest);
  const int V = exact_int(m, "voxels", manifest);
  const int T = exact_int(m, "scans", manifest);
  const double tr = field<double>(m, "tr", manifest);
  if (S < 1 || V < 1 || T < 1 || !(tr > 0.0)) throw DataError(manifest.string() + ": dimensions and tr must be positive");

  const json& table = m.contains("voxel_table") ? m.at("voxel_table") : throw DataError(manifest.string() + ": missing voxel_table");
  if (!table.is_array() || static_cast<int>(table.size()) != V) {
    throw DataError(manifest.string() + ": voxel_table must list exactly " + std::to_string(V) + " voxels");
  }
  std::vector<Voxel> voxels(V);
  std::set<Coord> seen;
  for (int i = 0; i < V; ++i) {
    const json& e = table[i];
    Voxel v;
    v.id = exact_int(e, "id", manifest);
    v.coord = {exact_int(e, "x", manifest), exact_int(e, "y", manifest), exact_int(e, "z", manifest)};
    v.roi = field<std::string>(e, "roi", manifest);
    if (v.id != i) throw DataError(manifest.string() + ": voxel ids must be dense 0..V-1 in order (entry " + std::to_string(i) + ")");
    if (!seen.insert(v.coord).second) {
      throw DuplicateCoordinateError(manifest.string() + ": duplicate coordinate (" + std::to_string(v.coord[0]) + ", " +
                                     std::to_string(v.coord[1]) + ", " + std::to_string(v.coord[2]) + ")");
    }
    voxels[i] = std::move(v);
  }

  const fs::path payload = manifest.parent_path() / field<std::string>(m, "data_file", manifest);
  if (!fs::exists(payload)) throw IoError(payload.string() + ": data file not found");
  const auto expected = static_cast<std::uintmax_t>(S) * V * T * 8;
  const auto actual = fs::file_size(payload);
  if (actual != expected) {
    throw LengthMismatchError(payload.string() + ": expected " + std::to_string(expected) + " bytes, found " +
                              std::to_string(actual));
  }
  BoldDataset out(S, T, tr, std::move(voxels), read_f64(payload));
  out.validate();
  return out;
}

void export_activation_map(const ActivationMap& map, const fs::path& path) {
  if (map.size() == 0) throw DataError("export_activation_map: empty map");
  const std::size_t n = map.size();
  if (map.coords.size() != n || map.rois.size() != n || map.score.size() != n || map.active.size() != n ||
      map.sign.size() != n) {
    throw DataError("export_activation_map: inconsistent column lengths");
  }
  std::ostringstream out;
  out << "# bnr-activation v" << kActivationCsvVersion << "\n";
  out << "voxel_id,x,y,z,roi," << map.score_name << ",active,sign\n";
  for (std::size_t i = 0; i < n; ++i) {
    out << map.voxel_ids[i] << ',' << map.coords[i][0] << ',' << map.coords[i][1] << ',' << map.coords[i][2] << ','
        << csv_field(map.rois[i]) << ',' << format_double(map.score[i]) << ',' << (map.active[i] ? 1 : 0) << ','
        << map.sign[i] << '\n';
  }
  write_text(path, out.str());
}

ActivationMap read_activation_map(const fs::path& path) {
  std::istringstream in(read_text(path));
  std::string line;
  if (!std::getline(in, line) || line != "# bnr-activation v" + std::to_string(kActivationCsvVersion)) {
    throw VersionMismatchError(path.string() + ": missing or unsupported activation CSV version line");
  }
  if (!std::getline(in, line)) throw DataError(path.string() + ": missing header");
  const auto header = split_csv_line(line);
  if (header.size() != 8 || header[0] != "voxel_id" || header[1] != "x" || header[2] != "y" || header[3] != "z" ||
      header[4] != "roi" || header[6] != "active" || header[7] != "sign") {
    throw DataError(path.string() + ": unexpected header");
  }
  ActivationMap map;
  map.score_name = header[5];
  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++row;
    const auto f = split_csv_line(line);
    if (f.size() != 8) throw DataError(path.string() + ": row " + std::to_string(row) + " has " + std::to_string(f.size()) + " fields");
    map.voxel_ids.push_back(parse_number<int>(f[0], path, row));
    map.coords.push_back({parse_number<int>(f[1], path, row), parse_number<int>(f[2], path, row),
                          parse_number<int>(f[3], path, row)});
    map.rois.push_back(f[4]);
    map.score.push_back(parse_number<double>(f[5], path, row));
    if (f[6] != "0" && f[6] != "1") throw DataError(path.string() + ": row " + std::to_string(row) + ": active must be 0 or 1");
    map.active.push_back(f[6] == "1");
    const int sign = parse_number<int>(f[7], path, row);
    if (sign < -1 || sign > 1) throw DataError(path.string() + ": row " + std::to_string(row) + ": sign must be -1, 0 or 1");
    map.sign.push_back(sign);
  }
  return map;
}

void export_isc_result(const IscResult& res, const std::vector<Voxel>& voxels, const fs::path& path) {
  if (static_cast<Eigen::Index>(voxels.size()) != res.p.size()) throw DataError("export_isc_result: voxel count mismatch");
  std::ostringstream out;
  out << "# bnr-isc v" << kActivationCsvVersion << " method=" << to_string(res.method)
      << " permutations=" << res.permutations << " alpha=" << format_double(res.alpha) << " fdr=" << (res.fdr ? 1 : 0)
      << "\n";
  out << "voxel_id,x,y,z,roi,mean_r,p_value,active\n";
  for (std::size_t i = 0; i < voxels.size(); ++i) {
    const auto& v = voxels[i];
    out << v.id << ',' << v.coord[0] << ',' << v.coord[1] << ',' << v.coord[2] << ',' << csv_field(v.roi) << ','
        << format_double(res.isc.mean[i]) << ',' << format_double(res.p[i]) << ',' << (res.active[i] ? 1 : 0) << '\n';
  }
  write_text(path, out.str());
}

std::vector<int> pvalue_histogram(const Eigen::VectorXd& p, int bins) {
  std::vector<int> out(bins, 0);
  for (double x : p) out[std::clamp(static_cast<int>(x * bins), 0, bins - 1)]++;
  return out;
}

Summary summarize(std::vector<double> x) {
  if (x.empty()) throw DataError("summarize: no draws");
  Summary s;
  const double n = static_cast<double>(x.size());
  for (double v : x) s.mean += v;
  s.mean /= n;
  double ss = 0.0;
  for (double v : x) ss += (v - s.mean) * (v - s.mean);
  s.sd = x.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
  std::sort(x.begin(), x.end());
  auto q = [&](double p) {
    const double h = (n - 1.0) * p;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, x.size() - 1);
    return x[lo] + (h - static_cast<double>(lo)) * (x[hi] - x[lo]);
  };
  s.q025 = q(0.025);
  s.q50 = q(0.5);
  s.q975 = q(0.975);
  return s;
}

const ParameterSummary* RoiFit::parameter(const std::string& name) const {
  for (const auto& p : parameters) {
    if (p.name == name) return &p;
  }
  return nullptr;
}

std::size_t FitReport::failed() const {
  return static_cast<std::size_t>(std::count_if(rois.begin(), rois.end(), [](const RoiFit& r) { return !r.ok; }));
}

ActivationMap FitReport::activation_map(const std::vector<Voxel>& voxels) const {
  std::vector<int> roi_of(voxels.size(), -1), pos(voxels.size(), -1);
  for (std::size_t r = 0; r < rois.size(); ++r) {
    for (std::size_t i = 0; i < rois[r].voxels.size(); ++i) {
      roi_of[rois[r].voxels[i]] = static_cast<int>(r);
      pos[rois[r].voxels[i]] = static_cast<int>(i);
    }
  }
  ActivationMap map;
  map.score_name = "kappa_mean";
  for (std::size_t v = 0; v < voxels.size(); ++v) {
    if (roi_of[v] < 0) continue;
    const RoiFit& fit = rois[roi_of[v]];
    map.voxel_ids.push_back(voxels[v].id);
    map.coords.push_back(voxels[v].coord);
    map.rois.push_back(voxels[v].roi);
    if (fit.ok) {
      map.score.push_back(fit.score[pos[v]]);
      map.active.push_back(fit.active[pos[v]]);
      map.sign.push_back(fit.sign[pos[v]]);
    } else {
      map.score.push_back(std::numeric_limits<double>::quiet_NaN());
      map.active.push_back(false);
      map.sign.push_back(0);
    }
  }
  return map;
}

void write_fit_report(const FitReport& report, const fs::path& path) {
  json rois = json::array();
  for (const auto& r : report.rois) {
    json jr{{"roi", r.roi}, {"seed", r.seed}, {"status", r.ok ? "ok" : "failed"}};
    if (!r.ok) jr["error"] = r.error;
    jr["voxels"] = r.voxels;
    if (r.ok) {
      json params = json::object();
      for (const auto& p : r.parameters) {
        json arr = json::array();
        for (const auto& s : p.values) arr.push_back(summary_json(s));
        params[p.name] = std::move(arr);
      }
      jr["parameters"] = std::move(params);
      const auto& d = r.diagnostics;
      jr["diagnostics"] = {{"max_rhat", d.max_rhat},
                           {"min_ess_bulk", d.min_ess_bulk},
                           {"min_ess_tail", d.min_ess_tail},
                           {"divergences", d.divergences},
                           {"depth_saturation", d.depth_saturation},
                           {"converged", d.converged}};
      jr["kappa_mean"] = r.score;
      std::vector<int> act(r.active.begin(), r.active.end());
      jr["active"] = act;
      jr["sign"] = r.sign;
    }
    rois.push_back(std::move(jr));
  }
  json j{{"format", "bnr-fit-report"},
         {"format_version", kReportFormatVersion},
         {"model", report.model},
         {"method", report.method_tag},
         {"dataset", report.dataset},
         {"kappa_threshold", report.kappa_threshold},
         {"rois", std::move(rois)}};
  write_text(path, j.dump(1) + "\n");
}

FitReport read_fit_report(const fs::path& path) {
  const json j = parse_json(path);
  if (field<std::string>(j, "format", path) != "bnr-fit-report") throw DataError(path.string() + ": not a fit report");
  if (exact_int(j, "format_version", path) != kReportFormatVersion) {
    throw VersionMismatchError(path.string() + ": unsupported report version");
  }
  FitReport rep;
  rep.model = field<std::string>(j, "model", path);
  rep.method_tag = field<std::string>(j, "method", path);
  rep.dataset = field<std::string>(j, "dataset", path);
  rep.kappa_threshold = real_field(j, "kappa_threshold", path);
  for (const auto& jr : j.at("rois")) {
    RoiFit r;
    r.roi = field<std::string>(jr, "roi", path);
    r.seed = field<std::uint64_t>(jr, "seed", path);
    r.ok = field<std::string>(jr, "status", path) == "ok";
    r.voxels = field<std::vector<int>>(jr, "voxels", path);
    if (!r.ok) {
      r.error = jr.value("error", "");
    } else {
      for (const auto& [name, arr] : jr.at("parameters").items()) {
        ParameterSummary p;
        p.name = name;
        for (const auto& s : arr) {
          p.values.push_back({real_field(s, "mean", path), real_field(s, "sd", path), real_field(s, "q025", path),
                              real_field(s, "q50", path), real_field(s, "q975", path)});
        }
        r.parameters.push_back(std::move(p));
      }
      const json& d = jr.at("diagnostics");
      r.diagnostics = {real_field(d, "max_rhat", path),
                       real_field(d, "min_ess_bulk", path),
                       real_field(d, "min_ess_tail", path),
                       field<std::size_t>(d, "divergences", path),
                       real_field(d, "depth_saturation", path),
                       field<bool>(d, "converged", path)};
      r.score = real_array(jr, "kappa_mean", path);
      for (int a : field<std::vector<int>>(jr, "active", path)) r.active.push_back(a != 0);
      r.sign = field<std::vector<int>>(jr, "sign", path);
      if (r.score.size() != r.voxels.size() || r.active.size() != r.voxels.size() || r.sign.size() != r.voxels.size()) {
        throw DataError(path.string() + ": ROI '" + r.roi + "' has inconsistent voxel arrays");
      }
    }
    rep.rois.push_back(std::move(r));
  }
  return rep;
}

void write_timing(const FitReport& report, double total_seconds, const fs::path& path) {
  json rois = json::array();
  for (const auto& r : report.rois) rois.push_back({{"roi", r.roi}, {"seconds", r.seconds}});
  write_text(path, json{{"total_seconds", total_seconds}, {"rois", rois}}.dump(1) + "\n");
}

void write_draws(const PosteriorDraws& draws, const std::vector<DrawBlock>& blocks, const fs::path& dir,
                 const std::string& prefix) {
  json files = json::array();
  for (int c = 0; c < draws.num_chains(); ++c) {
    const std::string name = prefix + "_chain" + std::to_string(c) + ".bin";
    // Eigen storage is column-major: each coordinate's draws are contiguous.
    const Eigen::MatrixXd& m = draws.chains[c].draws;
    write_f64(dir / name, m.data(), static_cast<std::size_t>(m.size()));
    files.push_back(name);
  }
  json jb = json::array();
  for (const auto& b : blocks) jb.push_back({{"name", b.name}, {"offset", b.offset}, {"length", b.length}});
  json h{{"format", "bnr-draws"},
         {"format_version", 1},
         {"chains", draws.num_chains()},
         {"draws", draws.draws_per_chain()},
         {"dim", draws.dim()},
         {"layout", "dimension-major"},
         {"byte_order", "little"},
         {"value_type", "float64"},
         {"blocks", jb},
         {"names", draws.names},
         {"files", files}};
  write_text(dir / (prefix + ".json"), h.dump(1) + "\n");
}

PosteriorDraws read_draws(const fs::path& header) {
  const json h = parse_json(header);
  if (field<std::string>(h, "format", header) != "bnr-draws") throw DataError(header.string() + ": not a draws header");
  if (exact_int(h, "format_version", header) != 1) throw VersionMismatchError(header.string() + ": unsupported draws version");
  const int chains = exact_int(h, "chains", header), n = exact_int(h, "draws", header), dim = exact_int(h, "dim", header);
  const auto files = field<std::vector<std::string>>(h, "files", header);
  if (static_cast<int>(files.size()) != chains) throw DataError(header.string() + ": file count does not match chains");
  PosteriorDraws out;
  out.names = field<std::vector<std::string>>(h, "names", header);
  for (const auto& f : files) {
    auto v = read_f64(header.parent_path() / f);
    if (v.size() != static_cast<std::size_t>(n) * dim) {
      throw LengthMismatchError(f + ": expected " + std::to_string(static_cast<std::size_t>(n) * dim * 8) + " bytes, found " +
                                std::to_string(v.size() * 8));
    }
    ChainResult c;
    c.draws = Eigen::Map<Eigen::MatrixXd>(v.data(), n, dim);
    out.chains.push_back(std::move(c));
  }
  return out;
}

}  // namespace bnr
