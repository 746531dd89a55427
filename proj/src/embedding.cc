#include "ta/embedding.h"

#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

namespace ta {

EmbeddingTable::EmbeddingTable(std::size_t dim) : dim_(dim) {
  if (dim == 0) throw Error(ErrorCode::kDimensionMismatch, "embedding dim must be positive");
}

void EmbeddingTable::set(const std::string& name, std::vector<double> vec) {
  if (vec.size() != dim_) {
    throw Error(ErrorCode::kDimensionMismatch, "entry '" + name + "' has dim " +
                                                   std::to_string(vec.size()) + ", table dim " +
                                                   std::to_string(dim_));
  }
  entries_[name] = std::move(vec);
}

void EmbeddingTable::set_unchecked(const std::string& name, std::vector<double> vec) {
  entries_[name] = std::move(vec);
}

const std::vector<double>& EmbeddingTable::at(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) {
    throw Error(ErrorCode::kMissingSourceToken, "missing embedding entry '" + name + "'");
  }
  return it->second;
}

EmbeddingTable EmbeddingTable::read(std::istream& in) {
  std::string line;
  std::size_t dim = 0;
  while (std::getline(in, line) && line.empty()) {
  }
  {
    std::istringstream header(line);
    std::string word;
    if (!(header >> word >> dim) || word != "dim" || dim == 0) {
      throw Error(ErrorCode::kMalformedInput, "expected 'dim N' header");
    }
  }
  EmbeddingTable table(dim);
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto tab = line.find('\t');
    if (tab == std::string::npos) {
      throw Error(ErrorCode::kMalformedInput, "line " + std::to_string(line_no) + ": missing tab");
    }
    std::string name = line.substr(0, tab);
    std::vector<double> vec;
    const char* p = line.data() + tab + 1;
    const char* end = line.data() + line.size();
    while (p < end) {
      while (p < end && *p == ' ') ++p;
      if (p == end) break;
      double v;
      auto [next, ec] = std::from_chars(p, end, v);
      if (ec != std::errc()) {
        throw Error(ErrorCode::kMalformedInput,
                    "line " + std::to_string(line_no) + ": bad number for '" + name + "'");
      }
      vec.push_back(v);
      p = next;
    }
    table.set_unchecked(name, std::move(vec));
  }
  return table;
}

EmbeddingTable EmbeddingTable::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kMalformedInput, "cannot open " + path);
  return read(in);
}

void EmbeddingTable::write(std::ostream& out) const {
  out << "dim " << dim_ << '\n';
  char buf[64];
  for (const auto& [name, vec] : entries_) {
    out << name << '\t';
    for (std::size_t i = 0; i < vec.size(); ++i) {
      auto [end, ec] = std::to_chars(buf, buf + sizeof buf, vec[i]);
      if (i) out << ' ';
      out.write(buf, end - buf);
    }
    out << '\n';
  }
}

void EmbeddingTable::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::kMalformedInput, "cannot write " + path);
  write(out);
}

namespace {

const std::vector<double>& source(const EmbeddingTable& table, const std::string& name) {
  const auto& v = table.at(name);
  if (v.size() != table.dim()) {
    throw Error(ErrorCode::kDimensionMismatch, "entry '" + name + "' has dim " +
                                                   std::to_string(v.size()) + ", table dim " +
                                                   std::to_string(table.dim()));
  }
  return v;
}

}  // namespace

TriggerEmbeddings init_trigger_embeddings(const EmbeddingTable& table,
                                          const TriggerInitConfig& cfg) {
  if (cfg.subwords.empty()) throw Error(ErrorCode::kInvalidConfig, "no subwords configured");
  const std::size_t dim = table.dim();
  std::vector<const std::vector<double>*> pieces;
  for (const auto& w : cfg.subwords) pieces.push_back(&source(table, w));
  const auto& open_anchor = source(table, cfg.open_anchor);
  const auto& close_anchor = source(table, cfg.close_anchor);

  const double k = static_cast<double>(pieces.size());
  TriggerEmbeddings out{std::vector<double>(dim), std::vector<double>(dim)};
  for (std::size_t i = 0; i < dim; ++i) {
    double sum = 0.0;
    for (const auto* p : pieces) sum += (*p)[i];
    const double semantic = 0.5 * (sum / k);
    out.open[i] = semantic + 0.5 * open_anchor[i];
    out.close[i] = semantic + 0.5 * close_anchor[i];
  }
  return out;
}

EmbeddingTable with_trigger_embeddings(const EmbeddingTable& table, const TriggerInitConfig& cfg) {
  auto init = init_trigger_embeddings(table, cfg);
  EmbeddingTable out = table;
  out.set(cfg.open_name, std::move(init.open));
  out.set(cfg.close_name, std::move(init.close));
  return out;
}

std::string TableIssue::describe() const {
  switch (kind) {
    case Kind::kWrongDim:
      return "'" + token + "' has dim " + std::to_string(actual_dim) + ", expected " +
             std::to_string(expected_dim);
    case Kind::kMissing:
      return "'" + token + "' is missing";
    case Kind::kNonFinite:
      return "'" + token + "' has a non-finite value";
  }
  return token;
}

std::vector<TableIssue> verify_table(const EmbeddingTable& table, std::size_t expected_dim,
                                     const TriggerInitConfig& cfg) {
  std::vector<TableIssue> issues;
  if (table.dim() != expected_dim) {
    issues.push_back({TableIssue::Kind::kWrongDim, "<header>", expected_dim, table.dim()});
  }
  for (const auto& [name, vec] : table.entries()) {
    if (vec.size() != expected_dim) {
      issues.push_back({TableIssue::Kind::kWrongDim, name, expected_dim, vec.size()});
    }
    for (double v : vec) {
      if (!std::isfinite(v)) {
        issues.push_back({TableIssue::Kind::kNonFinite, name, expected_dim, vec.size()});
        break;
      }
    }
  }
  std::vector<std::string> required = cfg.subwords;
  required.push_back(cfg.open_anchor);
  required.push_back(cfg.close_anchor);
  for (const auto& name : required) {
    if (!table.contains(name)) issues.push_back({TableIssue::Kind::kMissing, name, expected_dim, 0});
  }
  return issues;
}

}  // namespace ta
