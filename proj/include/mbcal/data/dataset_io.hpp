#pragma once

#include <filesystem>
#include <span>

#include "mbcal/data/trajectory.hpp"

namespace mbcal::data {

// JSON-lines session log.
//
// The first line is a header
//   {"format":"mbcal-dataset","version":1,"behaviors":n,"rewards":[...],"horizon":T}
// followed by one session per line
//   {"id":...,"user":u,"steps":[{"a":item,"b":behavior},...],
//    "candidates":[[...],...],"policy":...,"round":k}
// "candidates" is optional and a step may carry "m":true when masked.
// Header lines may repeat (so concatenated files stay valid) but must agree.
inline constexpr int kDatasetFormatVersion = 1;

void save_dataset(const std::filesystem::path& path, const Dataset& dataset);
/// Appends sessions, writing a header first when the file is new or empty.
void append_dataset(const std::filesystem::path& path, const BehaviorSpace& space, int horizon,
                    std::span<const Trajectory> trajectories);
/// Throws FormatError naming the offending line.
Dataset load_dataset(const std::filesystem::path& path);

}  // namespace mbcal::data
