#include "dynscene/labels.hpp"

namespace dynscene
{

namespace
{

constexpr std::array<std::string_view, kNumObjectClasses + 1> kNames{
  "none",      "aeroplane",   "bicycle", "bird",  "boat",      "bottle",     "bus",
  "car",       "cat",         "chair",   "cow",   "diningtable", "dog",      "horse",
  "motorbike", "person",      "pottedplant", "sheep", "sofa",  "train",      "tvmonitor",
};

// VOC colormap, index = class id.
constexpr std::array<Rgb, kNumObjectClasses + 1> kPalette{{
  {0, 0, 0},
  {128, 0, 0},
  {0, 128, 0},
  {128, 128, 0},
  {0, 0, 128},
  {128, 0, 128},
  {0, 128, 128},
  {128, 128, 128},
  {64, 0, 0},
  {192, 0, 0},
  {64, 128, 0},
  {192, 128, 0},
  {64, 0, 128},
  {192, 0, 128},
  {64, 128, 128},
  {192, 128, 128},
  {0, 64, 0},
  {128, 64, 0},
  {0, 192, 0},
  {128, 192, 0},
  {0, 64, 128},
}};

}  // namespace

std::string_view class_name(ObjectClass c)
{
  const auto i = static_cast<std::size_t>(c);
  return i < kNames.size() ? kNames[i] : "none";
}

std::optional<ObjectClass> parse_class(std::string_view name)
{
  for (std::size_t i = 1; i < kNames.size(); ++i) {
    if (kNames[i] == name) {
      return static_cast<ObjectClass>(i);
    }
  }
  return std::nullopt;
}

std::string accepted_class_names()
{
  std::string out;
  for (std::size_t i = 1; i < kNames.size(); ++i) {
    if (i > 1) {
      out += ", ";
    }
    out += kNames[i];
  }
  return out;
}

Rgb class_color(ObjectClass c)
{
  const auto i = static_cast<std::size_t>(c);
  return i < kPalette.size() ? kPalette[i] : Rgb{};
}

std::set<ObjectClass> default_movable_classes()
{
  return {ObjectClass::kPerson, ObjectClass::kCar};
}

}  // namespace dynscene
