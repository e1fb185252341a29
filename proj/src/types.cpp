#include "coughtb/types.hpp"

#include <string>

#include "coughtb/errors.hpp"

namespace coughtb {

std::string_view to_string(Device d) {
  switch (d) {
    case Device::HighFidelityMic: return "HighFidelityMic";
    case Device::Smartphone: return "Smartphone";
    case Device::Synthetic: return "Synthetic";
  }
  return "?";
}

std::string_view to_string(Group g) {
  switch (g) {
    case Group::TBpos: return "TBpos";
    case Group::OR: return "OR";
    case Group::HC: return "HC";
  }
  return "?";
}

std::string_view to_string(SegmentKind k) {
  switch (k) {
    case SegmentKind::Cough: return "Cough";
    case SegmentKind::Background: return "Background";
    case SegmentKind::WhiteNoise: return "WhiteNoise";
  }
  return "?";
}

std::string_view to_string(Task t) {
  switch (t) {
    case Task::TbVsRest: return "tb_vs_rest";
    case Task::TbVsOr: return "tb_vs_or";
    case Task::TbVsHc: return "tb_vs_hc";
  }
  return "?";
}

std::string_view to_string(Gender g) { return g == Gender::Male ? "male" : "female"; }

std::string_view to_string(Site s) {
  switch (s) {
    case Site::Kanyama: return "Kanyama";
    case Site::Chawama: return "Chawama";
    case Site::Synthetic: return "Synthetic";
  }
  return "?";
}

std::string_view to_string(DeviceFilter f) {
  switch (f) {
    case DeviceFilter::Mic: return "mic";
    case DeviceFilter::Phone: return "phone";
    case DeviceFilter::All: return "all";
  }
  return "?";
}

std::string_view task_label(Task t) {
  switch (t) {
    case Task::TbVsRest: return "TB+/Rest";
    case Task::TbVsOr: return "TB+/OR";
    case Task::TbVsHc: return "TB+/HC";
  }
  return "?";
}

std::string_view group_label(Group g) {
  switch (g) {
    case Group::TBpos: return "TB+";
    case Group::OR: return "OR";
    case Group::HC: return "HC";
  }
  return "?";
}

Device parse_device(std::string_view s) {
  if (s == "HighFidelityMic" || s == "mic") return Device::HighFidelityMic;
  if (s == "Smartphone" || s == "phone") return Device::Smartphone;
  if (s == "Synthetic" || s == "synthetic") return Device::Synthetic;
  throw InvalidArgument("unknown device '" + std::string(s) + "'");
}

Group parse_group(std::string_view s) {
  if (s == "TBpos" || s == "TB+") return Group::TBpos;
  if (s == "OR") return Group::OR;
  if (s == "HC") return Group::HC;
  throw InvalidArgument("unknown group '" + std::string(s) + "'");
}

Task parse_task(std::string_view s) {
  if (s == "tb_vs_rest") return Task::TbVsRest;
  if (s == "tb_vs_or") return Task::TbVsOr;
  if (s == "tb_vs_hc") return Task::TbVsHc;
  throw InvalidArgument("unknown task '" + std::string(s) + "'");
}

Gender parse_gender(std::string_view s) {
  if (s == "male" || s == "M") return Gender::Male;
  if (s == "female" || s == "F") return Gender::Female;
  throw InvalidArgument("unknown gender '" + std::string(s) + "'");
}

Site parse_site(std::string_view s) {
  if (s == "Kanyama") return Site::Kanyama;
  if (s == "Chawama") return Site::Chawama;
  if (s == "Synthetic") return Site::Synthetic;
  throw InvalidArgument("unknown site '" + std::string(s) + "'");
}

DeviceFilter parse_device_filter(std::string_view s) {
  if (s == "mic") return DeviceFilter::Mic;
  if (s == "phone") return DeviceFilter::Phone;
  if (s == "all") return DeviceFilter::All;
  throw InvalidArgument("unknown device filter '" + std::string(s) + "' (mic|phone|all)");
}

}  // namespace coughtb
