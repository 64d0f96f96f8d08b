// Bidirectional symbol <-> id table. Index 0 is reserved for epsilon, the
// empty string; finalized transducers never carry it as an input label.
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "fstforge/errors.hpp"

namespace fstforge {

using SymbolId = std::uint32_t;

inline constexpr SymbolId kEpsilon = 0;

class SymbolTable {
public:
    SymbolTable() {
        names_.emplace_back();  // id 0: epsilon
        index_.emplace("", kEpsilon);
    }

    // Returns the id for `name`, adding it if missing.
    SymbolId intern(std::string_view name) {
        if (auto it = index_.find(std::string(name)); it != index_.end())
            return it->second;
        SymbolId id = static_cast<SymbolId>(names_.size());
        names_.emplace_back(name);
        index_.emplace(names_.back(), id);
        return id;
    }

    std::optional<SymbolId> find(std::string_view name) const {
        auto it = index_.find(std::string(name));
        if (it == index_.end()) return std::nullopt;
        return it->second;
    }

    // Lookup that throws UnknownSymbolError instead of returning nullopt.
    SymbolId require(std::string_view name) const {
        auto id = find(name);
        if (!id) throw UnknownSymbolError(std::string(name));
        return *id;
    }

    const std::string& name(SymbolId id) const { return names_.at(id); }

    std::size_t size() const { return names_.size(); }

    bool contains(SymbolId id) const { return id < names_.size(); }

    bool operator==(const SymbolTable& other) const { return names_ == other.names_; }

private:
    std::vector<std::string> names_;
    std::unordered_map<std::string, SymbolId> index_;
};

}  // namespace fstforge
