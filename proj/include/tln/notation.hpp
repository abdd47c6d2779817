#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace tln {

// A layer reference in TLN notation, resolved against a network depth N at
// build time: "N" (rel, offset 0), "N-3" (rel, offset 3) or an absolute
// 1-based index.
struct Ref {
    bool relative = true;
    std::int64_t value = 0;  // offset below N when relative, 1-based index otherwise

    std::int64_t resolve(std::int64_t n) const { return relative ? n - value : value; }
    bool operator==(const Ref&) const = default;
};

enum class NormScheme { L2, BatchStd };

const char* norm_scheme_name(NormScheme s);
NormScheme norm_scheme_from_name(const std::string& name);

// One transfer-learning network description. parse_tln/format_tln cover the
// notation part (kappa, nu, tau); sizes, normalization scheme and the target
// class count are supplied separately by configuration.
struct TlnConfig {
    Ref kappa{true, 0};
    Ref nu{true, 0};
    std::int64_t tau = 0;
    std::vector<std::int64_t> sizes;  // tau entries
    NormScheme norm = NormScheme::BatchStd;
    std::int64_t target_classes = 0;

    bool operator==(const TlnConfig&) const = default;

    // Checks the notation-level invariants against a depth N.
    void validate(std::int64_t n) const;
};

// Grammar:  "[" "chi" ("^" ref)? "]" "_" ref "^" ((int "+")? "psi")
//           ref := "N" | "N-" int | int
// Rejects anything else with a ParseError carrying the byte offset and the
// expected-token set.
TlnConfig parse_tln(std::string_view text);

std::string format_tln(const TlnConfig& config);
std::string format_ref(const Ref& ref);

}  // namespace tln
