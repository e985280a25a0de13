#include "mvsa/worldgen/corrupt.hpp"

#include <algorithm>
#include <sstream>

#include "mvsa/core/error.hpp"

namespace mvsa {

bool Corruption::targets(int view) const { return std::find(views.begin(), views.end(), view) != views.end(); }

namespace {

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep)) {
    if (!cur.empty()) out.push_back(cur);
  }
  return out;
}

double parse_number(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double x = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw ConfigError("corruption: '" + key + "' expects a number, got '" + v + "'");
  }
}

std::string format_number(double x) {
  std::ostringstream o;
  o << x;
  return o.str();
}

}  // namespace

std::vector<Corruption> parse_corruptions(const std::string& spec) {
  std::vector<Corruption> out;
  for (const auto& entry : split(spec, ';')) {
    const auto colon = entry.find(':');
    const std::string kind = entry.substr(0, colon);
    Corruption c;
    if (kind == "noise") {
      c.kind = CorruptionKind::gaussian_noise;
    } else if (kind == "overexposure") {
      c.kind = CorruptionKind::overexposure;
    } else if (kind == "dropout") {
      c.kind = CorruptionKind::view_dropout;
    } else {
      throw ConfigError("corruption: unknown kind '" + kind + "' (noise, overexposure, dropout)");
    }
    if (colon == std::string::npos) throw ConfigError("corruption '" + entry + "' needs view=...");
    for (const auto& kv : split(entry.substr(colon + 1), ',')) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw ConfigError("corruption: expected key=value, got '" + kv + "'");
      const std::string key = kv.substr(0, eq), value = kv.substr(eq + 1);
      if (key == "view") {
        for (const auto& v : split(value, '+')) {
          const double x = parse_number(key, v);
          if (x < 0 || x != static_cast<int>(x)) throw ConfigError("corruption: bad view id '" + v + "'");
          c.views.push_back(static_cast<int>(x));
        }
      } else if (key == "sigma" && c.kind == CorruptionKind::gaussian_noise) {
        c.sigma = parse_number(key, value);
        if (c.sigma < 0) throw ConfigError("corruption: sigma must be >= 0");
      } else if (key == "gain" && c.kind == CorruptionKind::overexposure) {
        c.gain = parse_number(key, value);
        if (c.gain < 1) throw ConfigError("corruption: gain must be >= 1");
      } else {
        throw ConfigError("corruption: unexpected key '" + key + "' for " + kind);
      }
    }
    if (c.views.empty()) throw ConfigError("corruption '" + entry + "' names no view");
    out.push_back(c);
  }
  return out;
}

std::string format_corruptions(const std::vector<Corruption>& list) {
  std::string out;
  for (const auto& c : list) {
    if (!out.empty()) out += ';';
    std::string views;
    for (int v : c.views) views += (views.empty() ? "" : "+") + std::to_string(v);
    switch (c.kind) {
      case CorruptionKind::gaussian_noise: out += "noise:view=" + views + ",sigma=" + format_number(c.sigma); break;
      case CorruptionKind::overexposure: out += "overexposure:view=" + views + ",gain=" + format_number(c.gain); break;
      case CorruptionKind::view_dropout: out += "dropout:view=" + views; break;
    }
  }
  return out;
}

void corrupt(Tensor& frame, const Corruption& c, Rng& rng) {
  const std::int64_t ch = frame.shape().back();
  const std::int64_t pixels = frame.numel() / ch;
  float* p = frame.data();
  switch (c.kind) {
    case CorruptionKind::gaussian_noise:
      if (c.sigma == 0.0) return;
      for (std::int64_t i = 0; i < pixels; ++i)
        for (std::int64_t k = 0; k < std::min<std::int64_t>(ch, 3); ++k) {
          float& x = p[i * ch + k];
          x = static_cast<float>(std::clamp(x + c.sigma * rng.normal(), 0.0, 1.0));
        }
      return;
    case CorruptionKind::overexposure:
      for (std::int64_t i = 0; i < pixels; ++i)
        for (std::int64_t k = 0; k < std::min<std::int64_t>(ch, 3); ++k) {
          float& x = p[i * ch + k];
          x = static_cast<float>(std::clamp(x * c.gain, 0.0, 1.0));
        }
      return;
    case CorruptionKind::view_dropout:
      frame.fill(0.0f);
      return;
  }
}

std::vector<Detection> degrade_detections(std::vector<Detection> dets, const Corruption& c) {
  switch (c.kind) {
    case CorruptionKind::gaussian_noise:
      for (auto& d : dets) d.confidence = std::clamp(d.confidence - 2.5 * c.sigma, 0.0, 1.0);
      break;
    case CorruptionKind::overexposure:
      for (auto& d : dets) {
        if (c.gain >= 2.0 && d.label == ObjectClass::blemished) d.label = ObjectClass::unblemished;
        d.confidence = std::clamp(d.confidence - 0.05 * (c.gain - 1.0), 0.0, 1.0);
      }
      break;
    case CorruptionKind::view_dropout:
      dets.clear();
      break;
  }
  return dets;
}

}  // namespace mvsa
