#pragma once

#include <compare>
#include <cstdint>
#include <stdexcept>

namespace kglp {

using EntityId = std::int64_t;
using RelationId = std::int64_t;

// One directed labeled edge of the graph.
struct Triple {
    EntityId head = 0;
    RelationId rel = 0;
    EntityId tail = 0;

    friend constexpr bool operator==(const Triple&, const Triple&) = default;
    friend constexpr auto operator<=>(const Triple&, const Triple&) = default;
};

// Bad inputs: malformed files, schema violations, mismatched dimensions,
// out-of-range ids.
class ValidationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Failures while running: unwritable outputs, numerical divergence.
class RuntimeError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace kglp
