#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <string_view>

namespace dynscene
{

/// The 20 detector classes (PASCAL VOC ordering). kNone marks "no label".
enum class ObjectClass : std::uint8_t {
  kNone = 0,
  kAeroplane,
  kBicycle,
  kBird,
  kBoat,
  kBottle,
  kBus,
  kCar,
  kCat,
  kChair,
  kCow,
  kDiningTable,
  kDog,
  kHorse,
  kMotorbike,
  kPerson,
  kPottedPlant,
  kSheep,
  kSofa,
  kTrain,
  kTvMonitor,
};

inline constexpr int kNumObjectClasses = 20;

struct Rgb
{
  std::uint8_t r = 0;
  std::uint8_t g = 0;
  std::uint8_t b = 0;

  friend bool operator==(const Rgb &, const Rgb &) = default;
};

/// Lower-case detector name, e.g. "person", "tvmonitor". kNone -> "none".
std::string_view class_name(ObjectClass c);

/// Parses a detector label; nullopt for unknown strings.
std::optional<ObjectClass> parse_class(std::string_view name);

/// Comma-separated list of all accepted labels, for diagnostics.
std::string accepted_class_names();

/// Fixed label palette (VOC colormap). kNone maps to black.
Rgb class_color(ObjectClass c);

std::set<ObjectClass> default_movable_classes();

}  // namespace dynscene
