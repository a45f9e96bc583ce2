#pragma once

#include "ppgbp/signal.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace ppgbp {

/// Shortest decimal form that parses back to the identical double.
std::string format_double(double v);

/// Fixed 17-significant-digit form (model files and reports).
std::string format_double17(double v);

double parse_double(const std::string& s);

// Recording CSV: header "t_s,ppg,bp", one row per sample, '.' decimal point,
// LF line endings. Annotation CSV: header "label,kind,start_s,end_s" with
// kind in {NB, BH}. Both are written with round-trip-exact number formatting.

void write_recording_csv(const std::filesystem::path& path, const RecordingSession& session);
void write_annotations_csv(const std::filesystem::path& path,
                           const std::vector<IntervalAnnotation>& annotations);

/// Reads signals back. The sample rate is recovered from the time column and
/// snapped to the double that reproduces every written timestamp exactly, so
/// write-then-read of an exactly uniform session is bit-identical. Slightly
/// jittery external timestamps fall back to the span-average rate.
std::pair<UniformSignal, UniformSignal> read_recording_csv(const std::filesystem::path& path);

std::vector<IntervalAnnotation> read_annotations_csv(const std::filesystem::path& path);

RecordingSession read_session(const std::filesystem::path& recording_csv,
                              const std::filesystem::path& annotations_csv,
                              const std::string& subject_id);

void write_session(const std::filesystem::path& recording_csv,
                   const std::filesystem::path& annotations_csv,
                   const RecordingSession& session);

} // namespace ppgbp
