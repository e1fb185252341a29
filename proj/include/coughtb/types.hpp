#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>

namespace coughtb {

inline constexpr int kCanonicalRate = 16000;
inline constexpr int kNumClasses = 3;

enum class Device { HighFidelityMic, Smartphone, Synthetic };

// Class indices follow the fixed order [TB+, OR, HC].
enum class Group { TBpos = 0, OR = 1, HC = 2 };

enum class SegmentKind { Cough, Background, WhiteNoise };

enum class Task { TbVsRest, TbVsOr, TbVsHc };

enum class Gender { Male, Female };

enum class Site { Kanyama, Chawama, Synthetic };

// Which recordings contribute to a participant-level prediction.
enum class DeviceFilter { Mic, Phone, All };

inline constexpr std::array<Task, 3> kAllTasks = {Task::TbVsRest, Task::TbVsOr, Task::TbVsHc};
inline constexpr std::array<Group, 3> kAllGroups = {Group::TBpos, Group::OR, Group::HC};

std::string_view to_string(Device d);
std::string_view to_string(Group g);
std::string_view to_string(SegmentKind k);
std::string_view to_string(Task t);
std::string_view to_string(Gender g);
std::string_view to_string(Site s);
std::string_view to_string(DeviceFilter f);

// Human-readable task label, e.g. "TB+/Rest".
std::string_view task_label(Task t);
std::string_view group_label(Group g);

Device parse_device(std::string_view s);
Group parse_group(std::string_view s);
Task parse_task(std::string_view s);
Gender parse_gender(std::string_view s);
Site parse_site(std::string_view s);
DeviceFilter parse_device_filter(std::string_view s);

inline constexpr int class_index(Group g) { return static_cast<int>(g); }

// Whether a participant of group g takes part in the binary task t.
inline constexpr bool task_includes(Task t, Group g) {
  switch (t) {
    case Task::TbVsRest: return true;
    case Task::TbVsOr: return g != Group::HC;
    case Task::TbVsHc: return g != Group::OR;
  }
  return false;
}

inline constexpr bool device_matches(DeviceFilter f, Device d) {
  switch (f) {
    case DeviceFilter::All: return true;
    case DeviceFilter::Mic: return d == Device::HighFidelityMic || d == Device::Synthetic;
    case DeviceFilter::Phone: return d == Device::Smartphone;
  }
  return false;
}

}  // namespace coughtb
