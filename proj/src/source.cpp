#include "vsem/source.hpp"

#include <algorithm>
#include <fstream>
#include <iterator>
#include <nlohmann/json.hpp>

#include "vsem/error.hpp"

namespace vsem {

using json = nlohmann::json;

namespace {

Bytes read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::SourceError, "cannot read image " + path.string());
  return Bytes(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

SourceRecord record_from_json(const json& j) {
  SourceRecord rec;
  if (j.value("schema", 1) != 1) throw std::runtime_error("unsupported schema");
  rec.id = j.at("id").get<std::string>();
  if (rec.id.empty()) throw std::runtime_error("empty id");
  if (j.contains("source_ids")) rec.source_ids = j["source_ids"].get<std::vector<std::string>>();
  if (j.contains("glosses")) {
    for (const auto& g : j["glosses"]) {
      rec.glosses.push_back({g.at("lang").get<std::string>(), g.at("text").get<std::string>()});
    }
  }
  if (j.contains("images")) rec.image_locators = j["images"].get<std::vector<std::string>>();
  if (j.contains("relations")) {
    for (const auto& r : j["relations"]) {
      rec.relations.push_back({r.at("label").get<std::string>(), r.at("target").get<std::string>()});
    }
  }
  return rec;
}

json record_to_json(const SourceRecord& rec) {
  json glosses = json::array();
  for (const auto& g : rec.glosses) glosses.push_back({{"lang", g.lang}, {"text", g.text}});
  json relations = json::array();
  for (const auto& r : rec.relations) relations.push_back({{"label", r.label}, {"target", r.target}});
  return {{"schema", 1},          {"id", rec.id},           {"source_ids", rec.source_ids},
          {"glosses", glosses},   {"images", rec.image_locators}, {"relations", relations}};
}

}  // namespace

void InMemorySource::add_record(SourceRecord record) {
  const std::string id = record.id;
  if (records_.contains(id)) throw Error(ErrorCode::DuplicateNode, "source record " + id);
  records_.emplace(id, std::move(record));
}

void InMemorySource::add_image(std::string locator, Bytes bytes) {
  images_.insert_or_assign(std::move(locator), std::move(bytes));
}

bool InMemorySource::exists(std::string_view id) const { return records_.find(id) != records_.end(); }

SourceRecord InMemorySource::fetch_node(std::string_view id) const {
  auto it = records_.find(id);
  if (it == records_.end()) throw Error(ErrorCode::SourceError, "no record for " + std::string(id));
  return it->second;
}

Bytes InMemorySource::fetch_image(std::string_view locator) const {
  auto it = images_.find(locator);
  if (it == images_.end()) throw Error(ErrorCode::SourceError, "no image at " + std::string(locator));
  return it->second;
}

JsonlSource::JsonlSource(std::filesystem::path dir) : dir_(std::move(dir)) {
  if (!std::filesystem::is_directory(dir_)) {
    throw Error(ErrorCode::IoError, "source directory " + dir_.string() + " does not exist");
  }
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir_)) {
    if (entry.is_regular_file() && entry.path().extension() == ".jsonl") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  for (const auto& file : files) {
    std::ifstream in(file);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      SourceRecord rec;
      try {
        rec = record_from_json(json::parse(line));
      } catch (const std::exception& e) {
        throw Error(ErrorCode::FormatError,
                    file.string() + ":" + std::to_string(line_no) + ": " + e.what());
      }
      std::string id = rec.id;
      if (!records_.emplace(id, std::move(rec)).second) {
        throw Error(ErrorCode::DuplicateNode,
                    file.string() + ":" + std::to_string(line_no) + ": " + id);
      }
    }
  }
}

bool JsonlSource::exists(std::string_view id) const { return records_.find(id) != records_.end(); }

SourceRecord JsonlSource::fetch_node(std::string_view id) const {
  auto it = records_.find(id);
  if (it == records_.end()) throw Error(ErrorCode::SourceError, "no record for " + std::string(id));
  return it->second;
}

Bytes JsonlSource::fetch_image(std::string_view locator) const {
  std::filesystem::path p(locator);
  return read_file_bytes(p.is_absolute() ? p : dir_ / p);
}

void write_jsonl_source(const InMemorySource& source, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::ofstream out(dir / "nodes.jsonl", std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + (dir / "nodes.jsonl").string());
  for (const auto& [id, rec] : source.records()) {
    out << record_to_json(rec).dump() << '\n';
    for (const auto& loc : rec.image_locators) {
      Bytes bytes;
      try {
        bytes = source.fetch_image(loc);
      } catch (const Error&) {
        continue;  // dangling locator stays dangling
      }
      const auto path = dir / loc;
      std::filesystem::create_directories(path.parent_path());
      std::ofstream img(path, std::ios::binary | std::ios::trunc);
      img.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    }
  }
}

}  // namespace vsem
