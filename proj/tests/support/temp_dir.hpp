#pragma once

#include <filesystem>
#include <random>
#include <string>

namespace testing_support {

/// Fresh directory under the system temp path, removed on destruction.
struct TempDir
{
    std::filesystem::path path;

    explicit TempDir(const std::string& tag)
    {
        std::random_device rd;
        path = std::filesystem::temp_directory_path() / ("headswap_" + tag + "_" + std::to_string(rd()));
        std::filesystem::create_directories(path);
    }
    ~TempDir()
    {
        std::error_code ec;
        std::filesystem::remove_all(path, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
};

} // namespace testing_support
