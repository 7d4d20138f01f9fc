/*
 * Copyright 2026 The qlower Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

// Container files: a directory tree or a single zip holding the same tree.

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace qlower::detail {

using FileMap = std::map<std::string, std::vector<std::uint8_t>>;

/// Writes `files` under `path`: a zip archive when `path` ends in ".zip",
/// otherwise a directory (created if needed).
void write_container(const std::filesystem::path& path, const FileMap& files);

/// Reads every file of a directory or zip container.
FileMap read_container(const std::filesystem::path& path);

std::vector<std::uint8_t> zip_encode(const FileMap& files);
FileMap zip_decode(const std::vector<std::uint8_t>& bytes);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path,
                const std::vector<std::uint8_t>& bytes);
void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace qlower::detail
