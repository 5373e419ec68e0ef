#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "vsem/codec.hpp"

namespace vsem {

struct SourceGloss {
  std::string lang;
  std::string text;
};

struct SourceRelation {
  std::string label;   // raw source label, mapped later
  std::string target;  // neighbor node id
};

/// Everything a backing knowledge base knows about one node.
struct SourceRecord {
  std::string id;
  std::vector<std::string> source_ids;
  std::vector<SourceGloss> glosses;
  std::vector<std::string> image_locators;
  std::vector<SourceRelation> relations;
};

/// Read-only, deterministic backend the expansion loop pulls from.
class KnowledgeSource {
 public:
  virtual ~KnowledgeSource() = default;

  virtual bool exists(std::string_view id) const = 0;
  /// Throws SourceError carrying the id when the node cannot be read.
  virtual SourceRecord fetch_node(std::string_view id) const = 0;
  /// Throws SourceError when the locator cannot be read.
  virtual Bytes fetch_image(std::string_view locator) const = 0;
};

class InMemorySource final : public KnowledgeSource {
 public:
  void add_record(SourceRecord record);
  void add_image(std::string locator, Bytes bytes);

  bool exists(std::string_view id) const override;
  SourceRecord fetch_node(std::string_view id) const override;
  Bytes fetch_image(std::string_view locator) const override;

  const std::map<std::string, SourceRecord, std::less<>>& records() const noexcept { return records_; }

 private:
  std::map<std::string, SourceRecord, std::less<>> records_;
  std::map<std::string, Bytes, std::less<>> images_;
};

/// Offline source backed by a directory of *.jsonl files, one record per line:
///   {"schema":1,"id":"bn:1","source_ids":[...],
///    "glosses":[{"lang":"en","text":"..."}],
///    "images":["img/a.png"],
///    "relations":[{"label":"is_a","target":"bn:2"}]}
/// Image locators are paths relative to the directory (absolute paths are
/// used as-is). Records load eagerly; image bytes are read on demand.
class JsonlSource final : public KnowledgeSource {
 public:
  /// Throws FormatError (file + line) on malformed records, DuplicateNode on
  /// repeated ids.
  explicit JsonlSource(std::filesystem::path dir);

  bool exists(std::string_view id) const override;
  SourceRecord fetch_node(std::string_view id) const override;
  Bytes fetch_image(std::string_view locator) const override;

  std::size_t size() const noexcept { return records_.size(); }

 private:
  std::filesystem::path dir_;
  std::map<std::string, SourceRecord, std::less<>> records_;
};

/// Writes `source` in the JsonlSource layout: records to nodes.jsonl (sorted by
/// id) and every image under its locator path.
void write_jsonl_source(const InMemorySource& source, const std::filesystem::path& dir);

}  // namespace vsem
