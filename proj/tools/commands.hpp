#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "settings.hpp"

namespace dermalab::cli {

void run_synth(const Settings& s, const std::filesystem::path& out);
void run_pipeline(const Settings& s, const std::filesystem::path& session,
                  const std::filesystem::path& out);
void run_analyze(const Settings& s, const std::vector<std::filesystem::path>& features,
                 const std::filesystem::path& out);
void run_stats(const Settings& s, const std::vector<std::filesystem::path>& features,
               const std::filesystem::path& out);
void run_report(const Settings& s, const std::filesystem::path& analysis,
                const std::filesystem::path& features, const std::filesystem::path& stats,
                const std::filesystem::path& out);

}  // namespace dermalab::cli
