#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "gelfab/binio.hpp"
#include "gelfab/errors.hpp"
#include "gelfab/evalsuite.hpp"

namespace gelfab {

namespace {

std::string comments(const std::vector<std::string>& lines) {
  std::string out;
  for (const auto& l : lines) out += "# " + l + "\n";
  return out;
}

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, ',')) out.push_back(field);
  return out;
}

}  // namespace

std::string precision_csv(const std::vector<PrecisionCell>& cells, const std::vector<std::uint32_t>& ks,
                          const std::vector<std::string>& comment_lines) {
  std::string out = comments(comment_lines);
  out += "label,query_modality,candidate_modality";
  for (auto k : ks) out += ",top" + std::to_string(k);
  out += ",trials\n";
  for (const auto& c : cells) {
    out += c.label + "," + std::string(modality_name(c.query)) + "," +
           std::string(modality_name(c.candidate));
    for (auto k : ks) out += "," + fixed(c.at(k), 6);
    out += "," + std::to_string(c.trials) + "\n";
  }
  return out;
}

std::vector<PrecisionCell> parse_precision_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::vector<std::uint32_t> ks;
  bool header = false;
  std::vector<PrecisionCell> out;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto f = split_csv(line);
    if (!header) {
      if (f.size() < 4 || f[0] != "label") throw FormatError("precision csv: missing header");
      for (std::size_t i = 3; i + 1 < f.size(); ++i) {
        if (f[i].rfind("top", 0) != 0) throw FormatError("precision csv: bad column " + f[i]);
        ks.push_back(static_cast<std::uint32_t>(std::stoul(f[i].substr(3))));
      }
      header = true;
      continue;
    }
    if (f.size() != ks.size() + 4) throw FormatError("precision csv: bad row '" + line + "'");
    PrecisionCell c;
    c.label = f[0];
    c.query = parse_modality(f[1]);
    c.candidate = parse_modality(f[2]);
    c.ks = ks;
    for (std::size_t i = 0; i < ks.size(); ++i) c.precision.push_back(std::stod(f[3 + i]));
    c.trials = std::stoull(f.back());
    out.push_back(std::move(c));
  }
  if (!header) throw FormatError("precision csv: missing header");
  return out;
}

std::string confusion_csv(const ConfusionMatrix& cm, const std::vector<std::string>& comment_lines) {
  std::string out = comments(comment_lines);
  out += "fabric";
  for (int id : cm.fabric_ids) out += "," + std::to_string(id);
  out += "\n";
  for (std::size_t i = 0; i < cm.fabric_ids.size(); ++i) {
    out += std::to_string(cm.fabric_ids[i]);
    for (double v : cm.values[i]) out += "," + fixed(v, 9);
    out += "\n";
  }
  return out;
}

std::string matrix_csv(const std::vector<Vector>& m, const std::vector<std::string>& comment_lines) {
  std::string out = comments(comment_lines);
  out += "cluster";
  for (std::size_t j = 0; j < m.size(); ++j) out += "," + std::to_string(j);
  out += "\n";
  for (std::size_t i = 0; i < m.size(); ++i) {
    out += std::to_string(i);
    for (double v : m[i]) out += "," + fixed(v, 9);
    out += "\n";
  }
  return out;
}

PixelImage heatmap(const std::vector<Vector>& m) {
  if (m.empty()) throw std::invalid_argument("heatmap of an empty matrix");
  PixelImage img;
  img.height = m.size();
  img.width = m.front().size();
  img.channels = 1;
  img.max_value = 255;
  for (const auto& row : m) {
    if (row.size() != img.width) throw std::invalid_argument("heatmap of a ragged matrix");
    const double mx = *std::max_element(row.begin(), row.end());
    for (double v : row) {
      const double scaled = mx > 0.0 ? 255.0 * v / mx : 0.0;
      img.pixels.push_back(static_cast<std::uint16_t>(std::clamp<long>(std::lround(scaled), 0, 255)));
    }
  }
  return img;
}

void write_text(const std::string& path, const std::string& contents) {
  binio::write_file(path, contents);
}

}  // namespace gelfab
