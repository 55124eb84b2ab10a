#include "mimw/case.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "mimw/tensor_io.hpp"

namespace mimw {

namespace fs = std::filesystem;

std::optional<KernelCase> load_case(const std::string &path,
                                    std::string *error) {
  std::ifstream in(path);
  if (!in) {
    if (error) *error = "cannot open " + path;
    return std::nullopt;
  }
  KernelCase c;
  c.name = fs::path(path).stem().string();
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    auto trim = [](std::string s) {
      size_t b = s.find_first_not_of(" \t\r");
      size_t e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    std::string key = trim(line.substr(0, eq));
    std::string val = trim(line.substr(eq + 1));
    if (key.empty()) continue;
    if (key == "kernel") {
      c.kernel_path = (fs::path(path).parent_path() / val).string();
    } else if (key == "oracle") {
      c.oracle = val;
    } else if (key == "seed") {
      c.seed = std::stoull(val);
    } else if (key == "tolerance") {
      c.tolerance = std::stod(val);
    } else if (key == "fuzz") {
      c.fuzz = val == "true" || val == "1";
    } else if (key.rfind("scalar.", 0) == 0) {
      c.scalars[key.substr(7)] = std::stod(val);
    } else {
      if (error)
        *error = path + ":" + std::to_string(lineno) + ": unknown key '" +
                 key + "'";
      return std::nullopt;
    }
  }
  if (c.kernel_path.empty()) {
    if (error) *error = path + ": missing kernel=";
    return std::nullopt;
  }
  return c;
}

std::vector<KernelCase> load_corpus(const std::string &dir,
                                    std::string *error) {
  std::vector<std::string> paths;
  std::error_code ec;
  for (auto &e : fs::directory_iterator(dir, ec))
    if (e.path().extension() == ".case") paths.push_back(e.path().string());
  std::sort(paths.begin(), paths.end());
  std::vector<KernelCase> out;
  for (auto &p : paths) {
    auto c = load_case(p, error);
    if (!c) return {};
    out.push_back(std::move(*c));
  }
  return out;
}

std::map<std::string, Tile> make_inputs(const KernelProgram &p,
                                        std::uint64_t seed) {
  std::map<std::string, Tile> out;
  std::uint64_t k = 0;
  for (auto &tp : p.tensor_params) {
    if (tp.is_output) continue;
    out[tp.name] = random_tile(tp.shape, seed * 1000003 + k);
    ++k;
  }
  return out;
}

double rel_error(const Tile &a, const Tile &b) {
  if (a.shape != b.shape) return std::numeric_limits<double>::infinity();
  double max_abs = 1e-30, max_diff = 0;
  for (size_t i = 0; i < b.data.size(); ++i) {
    max_abs = std::max(max_abs, std::abs(static_cast<double>(b.data[i])));
    max_diff = std::max(max_diff,
                        std::abs(static_cast<double>(a.data[i]) -
                                 static_cast<double>(b.data[i])));
  }
  return max_diff / max_abs;
}

}  // namespace mimw
