// Copyright (c) 2026 The MultiFiT-kit Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "multifit/bootstrap.hpp"
#include "multifit/training.hpp"

namespace multifit {

// Exit codes: 0 success, 1 usage or configuration error, 2 data error,
// 3 numeric failure.
int run_command(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run_command(int argc, const char* const* argv);

// Lines of a UTF-8 text file, trailing CR removed. DataError when unreadable.
std::vector<std::string> read_lines(const std::string& path);

// `<class>\t<text>` per line. With empty `class_names` the classes are the
// sorted distinct names in the file; otherwise unknown names are a DataError.
LabeledDataset read_labeled_tsv(const std::string& path, std::vector<std::string> class_names = {});

// `<id>\t<text>` per line.
std::vector<IdentifiedText> read_texts_tsv(const std::string& path);

// `<id>\t<class>\t<text>` per line. Empty `class_names` is filled with the
// sorted distinct names in the file; otherwise unknown names are a DataError.
std::vector<IdentifiedText> read_gold_tsv(const std::string& path, std::vector<std::string>& class_names);

}  // namespace multifit
