#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mobileposer/rotmath.hpp"

namespace mobileposer {

/// Sensor sites in packing order. The order is part of the model input
/// contract and never changes.
enum class BodyLocation : int { kRightPocket = 0, kLeftPocket = 1, kRightWrist = 2, kLeftWrist = 3, kHead = 4 };

inline constexpr int kLocationCount = 5;
inline constexpr int kValuesPerLocation = 12;
inline constexpr int kInputDim = kLocationCount * kValuesPerLocation;  // 60
inline constexpr std::array<BodyLocation, kLocationCount> kAllLocations{
    BodyLocation::kRightPocket, BodyLocation::kLeftPocket, BodyLocation::kRightWrist,
    BodyLocation::kLeftWrist, BodyLocation::kHead};

/// Divisor applied to accelerations (m/s^2) before they enter the network.
inline constexpr double kAccelScale = 30.0;

std::string_view location_id(BodyLocation loc);
std::optional<BodyLocation> parse_location(std::string_view id);

enum class DeviceKind : std::uint8_t { kNone = 0, kPhone, kWatch, kEarbuds };

std::string_view device_kind_name(DeviceKind kind);

struct DeviceCombo {
  std::uint8_t mask = 0;  // bit k set = location k active
  // Which device first produced each location in the enumeration; bookkeeping only.
  std::array<DeviceKind, kLocationCount> device{};

  bool active(BodyLocation loc) const { return (mask >> static_cast<int>(loc)) & 1u; }
  int count() const;
  std::vector<BodyLocation> locations() const;
  /// Location ids joined by '+' in packing order, e.g. "rpocket+lwrist".
  std::string id() const;

  friend bool operator==(const DeviceCombo& a, const DeviceCombo& b) { return a.mask == b.mask; }
};

/// The 24 plausible device/location sets, ordered by size and then by
/// packing-order bitmask.
const std::vector<DeviceCombo>& enumerate_combos();

/// Looks up a combo by id ("lwrist", "rpocket+lwrist", or "all" for every
/// location; "all" is not a plausible combo and is accepted only for testing
/// and benchmarking).
std::optional<DeviceCombo> find_combo(std::string_view id);
DeviceCombo combo_from_mask(std::uint8_t mask);

using InputFrame = std::array<double, kInputDim>;

struct Reading {
  Vec3 accel = Vec3::Zero();            // m/s^2, model frame, gravity removed
  RotMat orient = RotMat::Identity();   // sensor-to-model rotation
};

using ReadingMap = std::map<BodyLocation, Reading>;

inline constexpr int slot_offset(BodyLocation loc) { return static_cast<int>(loc) * kValuesPerLocation; }

/// Packs readings for the active locations. Each slot holds accel / 30
/// followed by the row-major rotation; absent slots are zero. Throws
/// MissingReading when an active location has no reading.
InputFrame pack_input(const ReadingMap& readings, const DeviceCombo& combo);

/// Zeroes the slots of locations not in `combo`.
InputFrame mask_input(const InputFrame& frame, const DeviceCombo& combo);

}  // namespace mobileposer
