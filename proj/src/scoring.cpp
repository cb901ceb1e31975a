#include "domino/scoring.hpp"

#include <vector>

#include "domino/error.hpp"

namespace domino {

namespace {

const RawSaliency& lookup(const RawSaliencies& raw, const ChannelRef& ref) {
  auto it = raw.find(ref);
  if (it == raw.end()) throw Error(ErrorCode::IncompleteClosure, "no raw saliency for " + to_string(ref));
  return it->second;
}

ChannelScore combine(const std::vector<RawSaliency>& parts, bool averaged) {
  ChannelScore s;
  for (const auto& p : parts) {
    s.raw += p.raw;
    s.count += p.count;
  }
  s.score = apply_averaging(parts, averaged);
  return s;
}

std::vector<RawSaliency> class_parts(const DependencyGraph& dep, const RawSaliencies& raw, std::size_t cls,
                                     bool with_siblings) {
  std::vector<RawSaliency> parts;
  for (std::size_t o : dep.class_members(cls)) parts.push_back(lookup(raw, dep.outputs()[o]));
  if (with_siblings) {
    for (std::size_t s : dep.class_siblings(cls)) parts.push_back(lookup(raw, dep.slots()[s]));
  }
  return parts;
}

}  // namespace

std::string_view to_string(Variant v) {
  switch (v) {
    case Variant::Channel: return "channel";
    case Variant::DominoO: return "domino-o";
    case Variant::DominoIO: return "domino-io";
  }
  return "?";
}

Variant parse_variant(std::string_view name) {
  if (name == "channel") return Variant::Channel;
  if (name == "domino-o") return Variant::DominoO;
  if (name == "domino-io") return Variant::DominoIO;
  throw Error(ErrorCode::InvalidArgument, "unknown variant '" + std::string(name) + "'");
}

ChannelScore score_channel(const DependencyGraph& dep, const RawSaliencies& raw, const ChannelRef& c,
                           const DominoConfig& cfg, const std::set<ChannelRef>& pruned) {
  if (pruned.count(c)) throw Error(ErrorCode::PrunedChannel, to_string(c) + " is pruned");
  const bool avg = cfg.metric.averaged;
  switch (cfg.variant) {
    case Variant::Channel: return combine({lookup(raw, c)}, avg);
    case Variant::DominoO: return combine(class_parts(dep, raw, dep.class_of(c), false), avg);
    case Variant::DominoIO: return combine(class_parts(dep, raw, dep.class_of(c), true), avg);
  }
  return {};
}

SaliencyVector score_all(const DependencyGraph& dep, const RawSaliencies& raw, const DominoConfig& cfg,
                         const std::set<ChannelRef>& pruned) {
  SaliencyVector out;
  for (std::size_t cls = 0; cls < dep.class_count(); ++cls) {
    if (!dep.class_prunable(cls)) continue;
    const auto& members = dep.class_members(cls);
    if (pruned.count(dep.outputs()[members.front()])) continue;
    if (cfg.variant == Variant::Channel) {
      for (std::size_t o : members) out[dep.outputs()[o]] = combine({lookup(raw, dep.outputs()[o])}, cfg.metric.averaged);
    } else {
      const ChannelScore shared =
          combine(class_parts(dep, raw, cls, cfg.variant == Variant::DominoIO), cfg.metric.averaged);
      for (std::size_t o : members) out[dep.outputs()[o]] = shared;
    }
  }
  return out;
}

}  // namespace domino
