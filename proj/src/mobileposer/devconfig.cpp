#include "mobileposer/devconfig.hpp"

#include <algorithm>
#include <bit>

#include "mobileposer/error.hpp"

namespace mobileposer {

namespace {

constexpr std::array<std::string_view, kLocationCount> kLocationIds{"rpocket", "lpocket", "rwrist", "lwrist", "head"};

constexpr std::uint8_t bit(BodyLocation loc) { return static_cast<std::uint8_t>(1u << static_cast<int>(loc)); }

std::vector<DeviceCombo> build_combos() {
  using L = BodyLocation;
  const std::vector<std::optional<L>> phone{L::kLeftPocket, L::kRightPocket, L::kLeftWrist, L::kRightWrist, L::kHead, std::nullopt};
  const std::vector<std::optional<L>> watch{L::kLeftWrist, L::kRightWrist, std::nullopt};
  const std::vector<std::optional<L>> earbuds{L::kHead, L::kLeftPocket, L::kRightPocket, std::nullopt};

  std::vector<DeviceCombo> combos;
  auto add = [&](DeviceCombo& c, const std::optional<L>& loc, DeviceKind kind) {
    if (!loc) return;
    if (!(c.mask & bit(*loc))) c.device[static_cast<int>(*loc)] = kind;
    c.mask |= bit(*loc);
  };
  for (const auto& p : phone)
    for (const auto& w : watch)
      for (const auto& e : earbuds) {
        DeviceCombo c;
        add(c, p, DeviceKind::kPhone);
        add(c, w, DeviceKind::kWatch);
        add(c, e, DeviceKind::kEarbuds);
        if (c.mask == 0) continue;
        const bool seen = std::any_of(combos.begin(), combos.end(), [&](const DeviceCombo& o) { return o.mask == c.mask; });
        if (!seen) combos.push_back(c);
      }

  std::sort(combos.begin(), combos.end(), [](const DeviceCombo& a, const DeviceCombo& b) {
    const int ca = a.count(), cb = b.count();
    if (ca != cb) return ca < cb;
    return a.mask < b.mask;
  });
  return combos;
}

}  // namespace

std::string_view location_id(BodyLocation loc) { return kLocationIds[static_cast<int>(loc)]; }

std::optional<BodyLocation> parse_location(std::string_view id) {
  for (int k = 0; k < kLocationCount; ++k)
    if (kLocationIds[k] == id) return static_cast<BodyLocation>(k);
  return std::nullopt;
}

std::string_view device_kind_name(DeviceKind kind) {
  switch (kind) {
    case DeviceKind::kPhone: return "phone";
    case DeviceKind::kWatch: return "watch";
    case DeviceKind::kEarbuds: return "earbuds";
    case DeviceKind::kNone: break;
  }
  return "none";
}

int DeviceCombo::count() const { return std::popcount(static_cast<unsigned>(mask)); }

std::vector<BodyLocation> DeviceCombo::locations() const {
  std::vector<BodyLocation> out;
  for (auto loc : kAllLocations)
    if (active(loc)) out.push_back(loc);
  return out;
}

std::string DeviceCombo::id() const {
  std::string out;
  for (auto loc : locations()) {
    if (!out.empty()) out += '+';
    out += location_id(loc);
  }
  return out;
}

const std::vector<DeviceCombo>& enumerate_combos() {
  static const std::vector<DeviceCombo> combos = build_combos();
  return combos;
}

DeviceCombo combo_from_mask(std::uint8_t mask) {
  for (const auto& c : enumerate_combos())
    if (c.mask == mask) return c;
  DeviceCombo c;
  c.mask = mask;
  return c;
}

std::optional<DeviceCombo> find_combo(std::string_view id) {
  if (id == "all") return combo_from_mask(0x1f);
  for (const auto& c : enumerate_combos())
    if (c.id() == id) return c;
  // Accept any ordering of the location ids.
  std::uint8_t mask = 0;
  std::size_t start = 0;
  while (start <= id.size()) {
    const auto end = std::min(id.find('+', start), id.size());
    const auto loc = parse_location(id.substr(start, end - start));
    if (!loc) return std::nullopt;
    mask |= bit(*loc);
    start = end + 1;
  }
  for (const auto& c : enumerate_combos())
    if (c.mask == mask) return c;
  return std::nullopt;
}

InputFrame pack_input(const ReadingMap& readings, const DeviceCombo& combo) {
  InputFrame x{};
  for (auto loc : combo.locations()) {
    const auto it = readings.find(loc);
    if (it == readings.end())
      fail(ErrorCode::kMissingReading, "missing reading for active location " + std::string(location_id(loc)));
    const int base = slot_offset(loc);
    for (int i = 0; i < 3; ++i) x[base + i] = it->second.accel[i] / kAccelScale;
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) x[base + 3 + 3 * r + c] = it->second.orient(r, c);
  }
  return x;
}

InputFrame mask_input(const InputFrame& frame, const DeviceCombo& combo) {
  InputFrame x = frame;
  for (auto loc : kAllLocations) {
    if (combo.active(loc)) continue;
    std::fill_n(x.begin() + slot_offset(loc), kValuesPerLocation, 0.0);
  }
  return x;
}

}  // namespace mobileposer
