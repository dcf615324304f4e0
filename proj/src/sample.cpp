#include "vtg/sample.hpp"

#include <cmath>
#include <set>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

#include "vtg/fsio.hpp"

namespace vtg {

using ordered_json = nlohmann::ordered_json;

void validate_sample(const GroundingSample& s) {
  if (s.id.empty()) throw std::invalid_argument("sample: id must be non-empty");
  if (!std::isfinite(s.duration_s) || s.duration_s <= 0.0)
    throw std::invalid_argument("sample " + s.id + ": duration_s must be > 0");
  if (s.gt.start_s() < 0.0 || s.gt.end_s() > s.duration_s)
    throw std::invalid_argument("sample " + s.id + ": gt outside [0, duration_s]");
  if (!std::isfinite(s.difficulty) || s.difficulty < 0.0 || s.difficulty > 1.0)
    throw std::invalid_argument("sample " + s.id + ": difficulty outside [0,1]");
  for (double f : s.features)
    if (!std::isfinite(f))
      throw std::invalid_argument("sample " + s.id + ": non-finite feature");
}

std::string encode_sample(const GroundingSample& s) {
  validate_sample(s);
  ordered_json j;
  j["id"] = s.id;
  j["duration_s"] = s.duration_s;
  j["features"] = s.features;
  j["gt"] = {s.gt.start_s(), s.gt.end_s()};
  j["difficulty"] = s.difficulty;
  j["meta"] = ordered_json::object();
  for (const auto& [k, v] : s.meta) j["meta"][k] = v;
  return j.dump();
}

namespace {

[[noreturn]] void decode_fail(const std::string& field, const std::string& why) {
  throw std::runtime_error("decode error in field '" + field + "': " + why);
}

double require_number(const ordered_json& j, const std::string& field) {
  if (!j.is_number()) decode_fail(field, "expected a number");
  return j.get<double>();
}

}  // namespace

GroundingSample decode_sample(const std::string& line) {
  ordered_json j;
  try {
    j = ordered_json::parse(line);
  } catch (const std::exception& e) {
    throw std::runtime_error(std::string("decode error: invalid record: ") + e.what());
  }
  if (!j.is_object()) throw std::runtime_error("decode error: record is not an object");

  static const std::set<std::string> allowed = {"id",       "duration_s", "features",
                                                "gt",       "difficulty", "meta"};
  for (const auto& item : j.items())
    if (!allowed.count(item.key()))
      decode_fail(item.key(), "unknown field");
  for (const auto& name : allowed)
    if (!j.contains(name)) decode_fail(name, "missing");

  GroundingSample s;
  if (!j["id"].is_string()) decode_fail("id", "expected a string");
  s.id = j["id"].get<std::string>();
  s.duration_s = require_number(j["duration_s"], "duration_s");

  if (!j["features"].is_array()) decode_fail("features", "expected an array");
  for (const auto& f : j["features"]) s.features.push_back(require_number(f, "features"));

  if (!j["gt"].is_array() || j["gt"].size() != 2)
    decode_fail("gt", "expected a two-element array");
  const double g0 = require_number(j["gt"][0], "gt");
  const double g1 = require_number(j["gt"][1], "gt");
  if (!std::isfinite(g0) || !std::isfinite(g1)) decode_fail("gt", "non-finite endpoint");
  if (g0 > g1)
    throw std::runtime_error("validation error in field 'gt': start > end");
  s.gt = TimeInterval(g0, g1);

  s.difficulty = require_number(j["difficulty"], "difficulty");

  if (!j["meta"].is_object()) decode_fail("meta", "expected an object");
  for (const auto& item : j["meta"].items()) {
    if (!item.value().is_string()) decode_fail("meta", "values must be strings");
    s.meta[item.key()] = item.value().get<std::string>();
  }

  try {
    validate_sample(s);
  } catch (const std::invalid_argument& e) {
    throw std::runtime_error(std::string("validation error: ") + e.what());
  }
  return s;
}

std::vector<GroundingSample> read_samples(const std::filesystem::path& path) {
  std::vector<GroundingSample> out;
  std::size_t line_no = 0;
  for (const auto& line : fsio::read_lines(path)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      out.push_back(decode_sample(line));
    } catch (const std::exception& e) {
      throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": " +
                               e.what());
    }
  }
  return out;
}

void write_samples(const std::filesystem::path& path,
                   std::span<const GroundingSample> samples) {
  std::ostringstream out;
  for (const auto& s : samples) out << encode_sample(s) << '\n';
  fsio::atomic_write(path, out.str());
}

}  // namespace vtg
