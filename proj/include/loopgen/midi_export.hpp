#ifndef LOOPGEN_MIDI_EXPORT_HPP
#define LOOPGEN_MIDI_EXPORT_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "loopgen/pianoroll.hpp"

namespace loopgen {

// Render a loop as a format-1 Standard MIDI File: one meta track (4/4 plus
// tempo), one bass track on channel 0, one drum track on channel 9.
std::vector<std::uint8_t> export_midi(const Pianoroll& roll, double bpm = 120.0);

void export_midi_file(const Pianoroll& roll, const std::string& path, double bpm = 120.0);

}  // namespace loopgen

#endif
