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

#include <deque>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "multifit/tensor.hpp"

namespace multifit {

// Named tensors of a model. Copies are deep; aliases (weight tying) are
// resolved by index, so a copy keeps its ties pointing at its own storage.
template <typename Scalar>
class ParameterSet {
 public:
  struct Entry {
    std::string name;
    Tensor<Scalar> value;
    int group = 0;          // discriminative learning-rate group
    bool trainable = true;  // false for buffers such as batch-norm statistics
  };

  Tensor<Scalar>& add(std::string name, Tensor<Scalar> value, int group = 0,
                      bool trainable = true) {
    if (index_.count(name)) throw ContractError("duplicate parameter name '" + name + "'");
    index_.emplace(name, entries_.size());
    entries_.push_back(Entry{std::move(name), std::move(value), group, trainable});
    return entries_.back().value;
  }

  // Makes `alias` another name for the storage of `target`.
  void tie(const std::string& alias, std::string_view target) {
    if (index_.count(alias)) throw ContractError("duplicate parameter name '" + alias + "'");
    const std::size_t idx = index_of(target);
    index_.emplace(alias, idx);
    aliases_[alias] = entries_[idx].name;
  }

  bool contains(std::string_view name) const { return index_.find(name) != index_.end(); }

  std::size_t index_of(std::string_view name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw ContractError("unknown parameter '" + std::string(name) + "'");
    return it->second;
  }

  Tensor<Scalar>& operator[](std::string_view name) { return entries_[index_of(name)].value; }
  const Tensor<Scalar>& operator[](std::string_view name) const {
    return entries_[index_of(name)].value;
  }

  Entry& entry(std::size_t i) { return entries_.at(i); }
  const Entry& entry(std::size_t i) const { return entries_.at(i); }

  // Number of distinct storages (aliases excluded).
  std::size_t size() const { return entries_.size(); }

  const std::map<std::string, std::string>& aliases() const { return aliases_; }

  Index count_trainable_scalars() const {
    Index n = 0;
    for (const auto& e : entries_)
      if (e.trainable) n += e.value.size();
    return n;
  }

  auto begin() { return entries_.begin(); }
  auto end() { return entries_.end(); }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

  template <typename Other>
  ParameterSet<Other> cast() const {
    ParameterSet<Other> out;
    for (const auto& e : entries_) out.add(e.name, e.value.template cast<Other>(), e.group, e.trainable);
    for (const auto& [alias, target] : aliases_) out.tie(alias, target);
    return out;
  }

 private:
  std::deque<Entry> entries_;
  std::map<std::string, std::size_t, std::less<>> index_;
  std::map<std::string, std::string> aliases_;
};

}  // namespace multifit
