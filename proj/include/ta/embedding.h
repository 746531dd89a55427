#pragma once

// Initial vectors for dedicated trigger tokens, mixed from the subword pieces
// of the trigger's name and an existing chat delimiter.

#include <cstddef>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "ta/error.h"

namespace ta {

class EmbeddingTable {
 public:
  explicit EmbeddingTable(std::size_t dim);

  std::size_t dim() const { return dim_; }
  // Throws Error(kDimensionMismatch) when the vector length differs from dim().
  void set(const std::string& name, std::vector<double> vec);
  // Stores the vector as-is, for building deliberately broken tables.
  void set_unchecked(const std::string& name, std::vector<double> vec);
  bool contains(const std::string& name) const { return entries_.count(name) != 0; }
  // Throws Error(kMissingSourceToken).
  const std::vector<double>& at(const std::string& name) const;
  const std::map<std::string, std::vector<double>>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }

  // Text format: "dim N" then one "name<TAB>v1 v2 ..." line per entry.
  // Throws Error(kMalformedInput) / Error(kDimensionMismatch).
  static EmbeddingTable read(std::istream& in);
  static EmbeddingTable load(const std::string& path);
  // Values round-trip exactly.
  void write(std::ostream& out) const;
  void save(const std::string& path) const;

 private:
  std::size_t dim_;
  std::map<std::string, std::vector<double>> entries_;
};

struct TriggerInitConfig {
  std::vector<std::string> subwords{"think", "any", "where"};
  std::string open_anchor = "<|im_start|>";
  std::string close_anchor = "<|im_end|>";
  std::string open_name = "<ta>";
  std::string close_name = "</ta>";
};

struct TriggerEmbeddings {
  std::vector<double> open;
  std::vector<double> close;
};

// open = 0.5 * mean(subwords) + 0.5 * open_anchor; close likewise with the
// close anchor. Throws Error(kMissingSourceToken) / Error(kDimensionMismatch)
// / Error(kInvalidConfig) for an empty subword list.
TriggerEmbeddings init_trigger_embeddings(const EmbeddingTable& table,
                                          const TriggerInitConfig& cfg = {});

// Copy of table with the two new entries added under cfg's names.
EmbeddingTable with_trigger_embeddings(const EmbeddingTable& table,
                                       const TriggerInitConfig& cfg = {});

struct TableIssue {
  enum class Kind { kWrongDim, kMissing, kNonFinite } kind;
  std::string token;
  std::size_t expected_dim = 0;
  std::size_t actual_dim = 0;

  std::string describe() const;
};

// Empty when the table has expected_dim everywhere, holds every required
// source entry, and contains only finite values.
std::vector<TableIssue> verify_table(const EmbeddingTable& table, std::size_t expected_dim,
                                     const TriggerInitConfig& cfg = {});

}  // namespace ta
