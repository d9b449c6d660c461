#include "bitcal/signals.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include <fmt/format.h>

#include "bitcal/error.hpp"

namespace bitcal {

namespace {

struct Scalar {
  char32_t code_point;
  std::size_t length;
};

// Decodes one UTF-8 sequence starting at `pos`. Malformed input yields
// U+FFFD with length 1 so every byte is consumed exactly once.
Scalar decode_utf8(std::string_view text, std::size_t pos) {
  constexpr Scalar kInvalid{0xFFFD, 1};
  const auto lead = static_cast<unsigned char>(text[pos]);
  std::size_t length = 0;
  char32_t cp = 0;
  if (lead < 0x80) {
    return {lead, 1};
  } else if ((lead & 0xE0) == 0xC0) {
    length = 2;
    cp = lead & 0x1F;
  } else if ((lead & 0xF0) == 0xE0) {
    length = 3;
    cp = lead & 0x0F;
  } else if ((lead & 0xF8) == 0xF0) {
    length = 4;
    cp = lead & 0x07;
  } else {
    return kInvalid;
  }
  if (pos + length > text.size()) return kInvalid;
  for (std::size_t i = 1; i < length; ++i) {
    const auto cont = static_cast<unsigned char>(text[pos + i]);
    if ((cont & 0xC0) != 0x80) return kInvalid;
    cp = (cp << 6) | (cont & 0x3F);
  }
  // Overlong forms, surrogates, and values past U+10FFFF.
  static constexpr char32_t kMinForLength[] = {0, 0, 0x80, 0x800, 0x10000};
  if (cp < kMinForLength[length] || cp > 0x10FFFF ||
      (cp >= 0xD800 && cp <= 0xDFFF)) {
    return kInvalid;
  }
  return {cp, length};
}

// Unicode White_Space property.
bool is_unicode_whitespace(char32_t cp) {
  return (cp >= 0x09 && cp <= 0x0D) || cp == 0x20 || cp == 0x85 ||
         cp == 0xA0 || cp == 0x1680 || (cp >= 0x2000 && cp <= 0x200A) ||
         cp == 0x2028 || cp == 0x2029 || cp == 0x202F || cp == 0x205F ||
         cp == 0x3000;
}

bool eligible(std::string_view stripped) {
  return count_scalars(stripped) >= kMinStableChunkChars;
}

std::vector<double> unit_vector(const std::vector<double>& v) {
  double norm_sq = 0.0;
  for (double x : v) norm_sq += x * x;
  const double denom = std::sqrt(norm_sq) + kHiddenEpsilon;
  std::vector<double> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] / denom;
  return out;
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

void check_finite_vector(const std::vector<double>& v) {
  for (double x : v) {
    if (!std::isfinite(x)) {
      throw Error(ErrorKind::kInvalidInput, "hidden vector has a non-finite entry");
    }
  }
}

}  // namespace

double entropy(std::span<const double> probabilities) {
  double sum = 0.0;
  double h = 0.0;
  for (std::size_t i = 0; i < probabilities.size(); ++i) {
    const double p = probabilities[i];
    if (!(p >= 0.0) || !std::isfinite(p)) {
      throw Error(ErrorKind::kInvalidDistribution,
                  fmt::format("probability[{}] = {} is not a non-negative finite value", i, p));
    }
    sum += p;
    if (p > 0.0) h -= p * std::log(p);
  }
  if (std::abs(sum - 1.0) > kDistributionTolerance) {
    throw Error(ErrorKind::kInvalidDistribution,
                fmt::format("probabilities sum to {:.12g}, expected 1", sum));
  }
  // -0.0 and tiny negative rounding on point masses.
  return h > 0.0 ? h : 0.0;
}

double entropy(const Distribution& distribution) {
  if (const auto* probs = std::get_if<ProbabilityVector>(&distribution)) {
    return entropy(std::span<const double>(*probs));
  }
  const double nats = std::get<EntropyValue>(distribution).nats;
  if (!std::isfinite(nats) || nats < 0.0) {
    throw Error(ErrorKind::kInvalidInput,
                fmt::format("precomputed entropy {} must be finite and >= 0", nats));
  }
  return nats;
}

std::string_view strip_unicode_whitespace(std::string_view text) {
  std::size_t begin = text.size();
  std::size_t end = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    const Scalar s = decode_utf8(text, pos);
    if (!is_unicode_whitespace(s.code_point)) {
      if (begin == text.size()) begin = pos;
      end = pos + s.length;
    }
    pos += s.length;
  }
  if (begin == text.size()) return text.substr(0, 0);
  return text.substr(begin, end - begin);
}

std::size_t count_scalars(std::string_view text) {
  std::size_t n = 0;
  for (std::size_t pos = 0; pos < text.size(); ++n) {
    pos += decode_utf8(text, pos).length;
  }
  return n;
}

double trace_stability(std::span<const std::string> chunks) {
  std::size_t eligible_pairs = 0;
  std::size_t equal_pairs = 0;
  for (std::size_t i = 1; i < chunks.size(); ++i) {
    const auto prev = strip_unicode_whitespace(chunks[i - 1]);
    const auto cur = strip_unicode_whitespace(chunks[i]);
    if (eligible(prev) && eligible(cur)) {
      ++eligible_pairs;
      if (prev == cur) ++equal_pairs;
    }
  }
  if (eligible_pairs < 2) return 1.0;
  return static_cast<double>(equal_pairs) / static_cast<double>(eligible_pairs);
}

double hidden_stability(std::span<const std::vector<double>> hiddens) {
  if (hiddens.size() < 2) return 1.0;
  const std::size_t dim = hiddens.front().size();
  for (std::size_t i = 0; i < hiddens.size(); ++i) {
    if (hiddens[i].size() != dim) {
      throw Error(ErrorKind::kInvalidInput,
                  fmt::format("hidden vector {} has dimension {}, expected {}", i,
                              hiddens[i].size(), dim));
    }
    check_finite_vector(hiddens[i]);
  }
  double sum = 0.0;
  std::vector<double> prev = unit_vector(hiddens[0]);
  for (std::size_t i = 1; i < hiddens.size(); ++i) {
    std::vector<double> cur = unit_vector(hiddens[i]);
    sum += dot(prev, cur);
    prev = std::move(cur);
  }
  return sum / static_cast<double>(hiddens.size() - 1);
}

SignalReadout SignalTracker::observe(const StepSignals& step) {
  SignalReadout out;
  out.entropy = entropy(step.distribution);

  if (!chunks_.empty()) {
    const auto prev = strip_unicode_whitespace(chunks_.back());
    const auto cur = strip_unicode_whitespace(step.chunk_text);
    if (eligible(prev) && eligible(cur)) {
      ++eligible_pairs_;
      if (prev == cur) ++equal_pairs_;
    }
  }
  chunks_.push_back(step.chunk_text);
  out.trace_stability =
      eligible_pairs_ < 2 ? 1.0
                          : static_cast<double>(equal_pairs_) / static_cast<double>(eligible_pairs_);

  if (step.hidden) {
    check_finite_vector(*step.hidden);
    if (last_unit_hidden_ && last_unit_hidden_->size() != step.hidden->size()) {
      throw Error(ErrorKind::kInvalidInput,
                  fmt::format("hidden vector has dimension {}, expected {}",
                              step.hidden->size(), last_unit_hidden_->size()));
    }
    std::vector<double> unit = unit_vector(*step.hidden);
    if (last_unit_hidden_) cosine_sum_ += dot(*last_unit_hidden_, unit);
    last_unit_hidden_ = std::move(unit);
    ++hidden_count_;
  }
  out.hidden_stability_raw =
      hidden_count_ < 2 ? 1.0 : cosine_sum_ / static_cast<double>(hidden_count_ - 1);
  out.hidden_stability = std::clamp(out.hidden_stability_raw, 0.0, 1.0);
  return out;
}

}  // namespace bitcal
