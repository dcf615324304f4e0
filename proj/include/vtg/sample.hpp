#pragma once

#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "vtg/interval.hpp"

namespace vtg {

/// One synthetic grounding task: a feature vector standing in for the
/// video+query input, the ground-truth segment and a difficulty knob.
struct GroundingSample {
  std::string id;
  double duration_s = 0.0;
  std::vector<double> features;
  TimeInterval gt;
  double difficulty = 0.0;
  std::map<std::string, std::string> meta;
};

/// Throws std::invalid_argument when an invariant is broken (duration <= 0,
/// gt outside [0, duration], difficulty outside [0,1], non-finite values).
void validate_sample(const GroundingSample& s);

/// One self-delimiting JSON line. decode_sample(encode_sample(s)) == s.
std::string encode_sample(const GroundingSample& s);

/// Parses one record line. Throws std::runtime_error naming the offending
/// field on malformed input or invariant violations. Unknown fields are
/// rejected.
GroundingSample decode_sample(const std::string& line);

std::vector<GroundingSample> read_samples(const std::filesystem::path& path);
void write_samples(const std::filesystem::path& path, std::span<const GroundingSample> samples);

}  // namespace vtg
