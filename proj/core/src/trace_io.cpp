#include <algorithm>
#include <fstream>
#include <istream>
#include <ostream>

#include "json.hpp"
#include "selep/datastore.hpp"
#include "selep/error.hpp"

namespace selep::data {

using nlohmann::json;

void normalize_blocks(std::vector<BlockId>& blocks) {
  std::sort(blocks.begin(), blocks.end());
  blocks.erase(std::unique(blocks.begin(), blocks.end()), blocks.end());
}

void validate_trace(const QueryTrace& trace, const Database& db) {
  for (std::size_t i = 0; i < trace.records.size(); ++i) {
    const auto& r = trace.records[i];
    if (i > 0) {
      const auto& prev = trace.records[i - 1];
      if (r.query_id <= prev.query_id)
        throw ValidationError("query " + std::to_string(r.query_id) + ": ids must be strictly increasing");
      if (r.timestep < prev.timestep)
        throw ValidationError("query " + std::to_string(r.query_id) + ": timestep decreases");
    }
    for (const auto& b : r.blocks)
      if (!db.contains(b))
        throw ValidationError("query " + std::to_string(r.query_id) + " references block " + to_string(b) +
                              " which is not in database " + db.ref());
  }
}

void write_trace(const QueryTrace& trace, std::ostream& out) {
  if (!trace.database_ref.empty()) out << json{{"db", trace.database_ref}}.dump() << '\n';
  for (const auto& r : trace.records) {
    json blocks = json::array();
    for (const auto& b : r.blocks) blocks.push_back({b.table, b.block});
    json line{{"q", r.query_id}, {"t", r.timestep}, {"b", std::move(blocks)}};
    if (!r.label.empty()) line["cat"] = r.label;
    out << line.dump() << '\n';
  }
}

QueryTrace read_trace(std::istream& in) {
  QueryTrace trace;
  std::string text;
  std::size_t line_no = 0;
  while (std::getline(in, text)) {
    ++line_no;
    if (text.find_first_not_of(" \r\n\t") == std::string::npos) continue;
    json line;
    try {
      line = json::parse(text);
    } catch (const json::exception& e) {
      throw ParseError(line_no, std::string("malformed JSON: ") + e.what());
    }
    if (!line.is_object()) throw ParseError(line_no, "expected a JSON object");
    if (!line.contains("q")) {
      if (line.contains("db") && line["db"].is_string() && trace.records.empty()) {
        trace.database_ref = line["db"].get<std::string>();
        continue;
      }
      throw ParseError(line_no, "record is missing \"q\"");
    }
    QueryRecord r;
    try {
      if (!line.at("q").is_number_unsigned() || !line.at("t").is_number_unsigned())
        throw ParseError(line_no, "\"q\" and \"t\" must be non-negative integers");
      r.query_id = line["q"].get<std::uint64_t>();
      r.timestep = line["t"].get<std::uint64_t>();
      const auto& blocks = line.at("b");
      if (!blocks.is_array()) throw ParseError(line_no, "\"b\" must be an array");
      for (const auto& pair : blocks) {
        if (!pair.is_array() || pair.size() != 2 || !pair[0].is_number_unsigned() ||
            !pair[1].is_number_unsigned())
          throw ParseError(line_no, "block ids must be [table_id, block_no] pairs");
        r.blocks.push_back(BlockId{pair[0].get<std::uint32_t>(), pair[1].get<std::uint32_t>()});
      }
      if (line.contains("cat")) {
        if (!line["cat"].is_string()) throw ParseError(line_no, "\"cat\" must be a string");
        r.label = line["cat"].get<std::string>();
      }
    } catch (const json::exception& e) {
      throw ParseError(line_no, e.what());
    }
    normalize_blocks(r.blocks);
    trace.records.push_back(std::move(r));
  }
  return trace;
}

void save_trace(const QueryTrace& trace, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write trace " + path.string());
  write_trace(trace, out);
  if (!out) throw IoError("failed writing trace " + path.string());
}

QueryTrace load_trace(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open trace " + path.string());
  return read_trace(in);
}

std::uint64_t trace_checksum(const QueryTrace& trace) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&h](std::uint64_t v) {
    for (int i = 0; i < 8; ++i) {
      h ^= (v >> (8 * i)) & 0xff;
      h *= 0x100000001b3ULL;
    }
  };
  for (const auto& r : trace.records) {
    mix(r.query_id);
    mix(r.blocks.size());
    for (const auto& b : r.blocks) mix((std::uint64_t{b.table} << 32) | b.block);
  }
  return h;
}

}  // namespace selep::data
