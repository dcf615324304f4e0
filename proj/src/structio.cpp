#include "vtg/structio.hpp"

#include <array>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <stdexcept>

namespace vtg {

void TagProfile::validate() const {
  const std::array<const std::string*, 4> tags = {&think_open, &think_close, &answer_open,
                                                  &answer_close};
  for (const auto* t : tags)
    if (t->empty()) throw std::invalid_argument("TagProfile: empty tag string");
  for (std::size_t i = 0; i < tags.size(); ++i)
    for (std::size_t j = i + 1; j < tags.size(); ++j)
      if (*tags[i] == *tags[j])
        throw std::invalid_argument("TagProfile: tag strings must be pairwise distinct");
}

namespace {

// Section between the first open tag and the first close tag after it.
std::optional<std::string_view> section_between(std::string_view text,
                                                const std::string& open,
                                                const std::string& close) {
  const auto o = text.find(open);
  if (o == std::string_view::npos) return std::nullopt;
  const auto begin = o + open.size();
  const auto c = text.find(close, begin);
  if (c == std::string_view::npos) return std::nullopt;
  return text.substr(begin, c - begin);
}

// Strict number grammar: optional sign, then digits with an optional
// fractional part, or a bare fractional part. No exponents. On success
// advances *pos past the number and stores its value.
bool scan_number(std::string_view s, std::size_t& pos, double& out) {
  std::size_t p = pos;
  const std::size_t n = s.size();
  std::size_t start = p;
  if (p < n && (s[p] == '+' || s[p] == '-')) ++p;
  std::size_t int_digits = 0;
  while (p < n && std::isdigit(static_cast<unsigned char>(s[p]))) ++p, ++int_digits;
  std::size_t frac_digits = 0;
  if (p < n && s[p] == '.') {
    ++p;
    while (p < n && std::isdigit(static_cast<unsigned char>(s[p]))) ++p, ++frac_digits;
  }
  if (int_digits == 0 && frac_digits == 0) return false;
  char buf[64];
  const std::size_t len = p - start;
  if (len >= sizeof(buf)) return false;
  std::memcpy(buf, s.data() + start, len);
  buf[len] = '\0';
  out = std::strtod(buf, nullptr);
  pos = p;
  return true;
}

void skip_ws(std::string_view s, std::size_t& pos) {
  while (pos < s.size() && std::isspace(static_cast<unsigned char>(s[pos]))) ++pos;
}

// First "a, b" numeric pair in s: two numbers separated by a comma and
// optional whitespace. Surrounding brackets (or any other text) are simply
// not part of the match, so "[a, b]" and "a, b" both work.
std::optional<std::pair<double, double>> find_number_pair(std::string_view s) {
  for (std::size_t i = 0; i < s.size(); ++i) {
    std::size_t p = i;
    double a = 0.0, b = 0.0;
    if (!scan_number(s, p, a)) continue;
    skip_ws(s, p);
    if (p >= s.size() || s[p] != ',') continue;
    ++p;
    skip_ws(s, p);
    if (!scan_number(s, p, b)) continue;
    if (!std::isfinite(a) || !std::isfinite(b)) continue;
    return std::make_pair(a, b);
  }
  return std::nullopt;
}

std::string format3(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.3f", v);
  return buf;
}

}  // namespace

StructuredResponse parse_response(std::string_view text, const TagProfile& profile) {
  StructuredResponse r;
  r.raw_text = std::string(text);

  for (const std::string* tag : {&profile.think_open, &profile.think_close,
                                 &profile.answer_open, &profile.answer_close})
    if (text.find(*tag) != std::string_view::npos) r.tags_present.insert(*tag);

  if (auto cot = section_between(text, profile.think_open, profile.think_close))
    r.cot_text = std::string(*cot);

  if (auto answer = section_between(text, profile.answer_open, profile.answer_close)) {
    if (auto pair = find_number_pair(*answer)) {
      if (pair->first <= pair->second)
        r.interval = TimeInterval(pair->first, pair->second);
      else
        r.improper_pair = *pair;
    }
  }

  r.well_formed = r.cot_text.has_value() && r.interval.has_value();
  return r;
}

std::string render_response(std::string_view cot, const TimeInterval& iv,
                            const TagProfile& profile) {
  for (const std::string* tag : {&profile.think_open, &profile.think_close,
                                 &profile.answer_open, &profile.answer_close})
    if (cot.find(*tag) != std::string_view::npos)
      throw std::invalid_argument("render_response: cot contains tag string '" + *tag +
                                  "'");
  std::string out;
  out.reserve(cot.size() + 64);
  out += profile.think_open;
  out += cot;
  out += profile.think_close;
  out += profile.answer_open;
  out += '[';
  out += format3(iv.start_s());
  out += ", ";
  out += format3(iv.end_s());
  out += ']';
  out += profile.answer_close;
  return out;
}

int format_reward(const StructuredResponse& resp, const TagProfile& profile) {
  for (const std::string* tag : {&profile.think_open, &profile.think_close,
                                 &profile.answer_open, &profile.answer_close})
    if (!resp.tags_present.count(*tag)) return 0;
  return 1;
}

}  // namespace vtg
