#pragma once

#include <string>
#include <vector>

#include "json.hpp"

namespace mvsa {

/// `effector` marks the expert's hand; the decision rules use its centre.
enum class ObjectClass { unblemished, blemished, patroller, effector };

std::string to_string(ObjectClass c);
ObjectClass parse_object_class(const std::string& s);

/// Pixel box; a blob covering columns [a, b) has x_min = a, x_max = b.
struct BBox {
  double x_min = 0, y_min = 0, x_max = 0, y_max = 0;

  double cx() const { return 0.5 * (x_min + x_max); }
  double cy() const { return 0.5 * (y_min + y_max); }
  bool valid() const { return x_min < x_max && y_min < y_max; }
  bool operator==(const BBox&) const = default;
};

struct Detection {
  ObjectClass label = ObjectClass::unblemished;
  double confidence = 0.0;
  BBox box;
  int view = 0;
  /// Ground-truth object the detection belongs to (expert slot for patrollers).
  int object_id = 0;

  bool operator==(const Detection&) const = default;
};

nlohmann::json to_json(const Detection& d);
Detection detection_from_json(const nlohmann::json& j);

enum class Status { unblemished = 0, blemished = 1, unknown = 2 };

inline constexpr int kStatusClasses = 3;

std::string to_string(Status s);
Status parse_status(const std::string& s);

}  // namespace mvsa
