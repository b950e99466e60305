#pragma once

#include <cstdint>

namespace ecgl {

/// Process-wide count of sparse (CSR) kernel invocations. Used to show that
/// MLP training never touches graph structure.
std::uint64_t csr_traversals() noexcept;
void reset_csr_traversals() noexcept;
void note_csr_traversal() noexcept;

}  // namespace ecgl
