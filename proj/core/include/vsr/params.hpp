// Named parameter store. Order of insertion is stable and defines the
// checkpoint layout; every tensor carries a trainable flag and an optional
// frozen-group label so integrity checks can hash exactly the weights that
// must never move.
#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "vsr/autograd.hpp"

namespace vsr {

template <class T>
struct ParamEntryT {
  VarT<T> var;
  bool trainable = true;
  std::string frozen_group;  // empty for trainable weights
};

template <class T>
struct ParamStoreT {
  std::vector<std::string> order;
  std::unordered_map<std::string, ParamEntryT<T>> entries;

  VarT<T> add(const std::string& name, TensorT<T> init, bool trainable, const std::string& frozen_group = "") {
    if (entries.count(name)) throw UsageError("duplicate parameter name: " + name);
    auto var = leaf(std::move(init), trainable);
    order.push_back(name);
    entries[name] = ParamEntryT<T>{var, trainable, frozen_group};
    return var;
  }

  const ParamEntryT<T>& at(const std::string& name) const {
    auto it = entries.find(name);
    if (it == entries.end()) throw UsageError("unknown parameter name: " + name);
    return it->second;
  }

  VarT<T> var(const std::string& name) const { return at(name).var; }
  bool has(const std::string& name) const { return entries.count(name) != 0; }

  void zero_grads() {
    for (const auto& name : order) {
      auto& g = entries[name].var->grad;
      if (!g.data.empty()) std::fill(g.data.begin(), g.data.end(), T(0));
    }
  }

  std::vector<std::string> trainable_names() const {
    std::vector<std::string> out;
    for (const auto& name : order)
      if (at(name).trainable) out.push_back(name);
    return out;
  }

  int64_t count(const std::string& prefix = "") const {
    int64_t n = 0;
    for (const auto& name : order)
      if (name.rfind(prefix, 0) == 0) n += at(name).var->value.numel();
    return n;
  }
};

// Element-wise copy of a store into another scalar type, preserving order,
// trainable flags, and frozen groups. Used to rebuild a float model at
// float64 for finite-difference probing.
template <class U, class T>
ParamStoreT<U> cast_param_store(const ParamStoreT<T>& src) {
  ParamStoreT<U> out;
  for (const auto& name : src.order) {
    const auto& e = src.at(name);
    out.add(name, e.var->value.template cast<U>(), e.trainable, e.frozen_group);
  }
  return out;
}

// FNV-1a over the raw value bytes of every parameter whose name starts with
// `prefix`, in insertion order. Used to verify frozen weights stay untouched.
template <class T>
uint64_t hash_params(const ParamStoreT<T>& store, const std::string& prefix = "") {
  uint64_t h = 0xcbf29ce484222325ull;
  for (const auto& name : store.order) {
    if (name.rfind(prefix, 0) != 0) continue;
    const auto& t = store.at(name).var->value;
    const unsigned char* bytes = reinterpret_cast<const unsigned char*>(t.data.data());
    for (size_t i = 0; i < t.data.size() * sizeof(T); ++i) {
      h ^= bytes[i];
      h *= 0x100000001b3ull;
    }
  }
  return h;
}

}  // namespace vsr
