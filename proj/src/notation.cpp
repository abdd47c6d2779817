#include "tln/notation.hpp"

#include "tln/error.hpp"

namespace tln {

const char* norm_scheme_name(NormScheme s) {
    return s == NormScheme::L2 ? "l2" : "std";
}

NormScheme norm_scheme_from_name(const std::string& name) {
    if (name == "l2") return NormScheme::L2;
    if (name == "std") return NormScheme::BatchStd;
    throw ContractError("unknown normalization scheme '" + name + "' (expected l2 or std)");
}

void TlnConfig::validate(std::int64_t n) const {
    if (n < 1) throw ContractError("network depth must be positive");
    const std::int64_t k = kappa.resolve(n);
    const std::int64_t v = nu.resolve(n);
    if (k < 1 || k > n) {
        throw ContractError("kappa " + std::to_string(k) + " outside [1," + std::to_string(n) + "]");
    }
    if (tau != static_cast<std::int64_t>(sizes.size())) {
        throw ContractError("tau " + std::to_string(tau) + " does not match " +
                            std::to_string(sizes.size()) + " layer sizes");
    }
    if (tau > 0 && k != n) {
        throw ContractError("depth augmentation requires the pretrained classification layer "
                            "(kappa = N)");
    }
    if (v < 1 || v > k + tau) {
        throw ContractError("nu " + std::to_string(v) + " outside [1," + std::to_string(k + tau) +
                            "]");
    }
    for (auto s : sizes) {
        if (s < 1) throw ContractError("appended layer size must be positive");
    }
    if (target_classes == 1) throw ContractError("single-class classifier is degenerate");
}

namespace {

class Scanner {
public:
    explicit Scanner(std::string_view text) : text_(text) {}

    std::size_t pos() const { return pos_; }
    bool done() const { return pos_ >= text_.size(); }
    char peek() const { return pos_ < text_.size() ? text_[pos_] : '\0'; }

    [[noreturn]] void fail(std::vector<std::string> expected) const {
        std::string msg = "parse error at byte " + std::to_string(pos_) + ": expected ";
        for (std::size_t i = 0; i < expected.size(); ++i) {
            if (i) msg += " or ";
            msg += expected[i];
        }
        throw ParseError(msg, pos_, std::move(expected));
    }

    void literal(std::string_view lit) {
        if (text_.substr(pos_, lit.size()) != lit) fail({std::string("\"") + std::string(lit) + "\""});
        pos_ += lit.size();
    }

    bool try_literal(std::string_view lit) {
        if (text_.substr(pos_, lit.size()) != lit) return false;
        pos_ += lit.size();
        return true;
    }

    std::int64_t integer() {
        if (done() || peek() < '0' || peek() > '9') fail({"integer"});
        std::int64_t v = 0;
        const std::size_t start = pos_;
        while (!done() && peek() >= '0' && peek() <= '9') {
            v = v * 10 + (text_[pos_] - '0');
            if (v > 1'000'000) {
                pos_ = start;
                fail({"integer below 1000000"});
            }
            ++pos_;
        }
        if (text_[start] == '0' && pos_ - start > 1) {
            pos_ = start;
            fail({"integer without leading zeros"});
        }
        return v;
    }

    Ref ref() {
        if (try_literal("N")) {
            if (try_literal("-")) return Ref{true, integer()};
            return Ref{true, 0};
        }
        if (peek() >= '0' && peek() <= '9') {
            const std::size_t at = pos_;
            const std::int64_t v = integer();
            if (v < 1) {
                pos_ = at;
                fail({"1-based unit index"});
            }
            return Ref{false, v};
        }
        fail({"\"N\"", "integer"});
    }

private:
    std::string_view text_;
    std::size_t pos_ = 0;
};

}  // namespace

TlnConfig parse_tln(std::string_view text) {
    Scanner s(text);
    TlnConfig c;
    s.literal("[");
    s.literal("chi");
    if (s.try_literal("^")) c.kappa = s.ref();
    s.literal("]");
    s.literal("_");
    c.nu = s.ref();
    s.literal("^");
    if (s.peek() >= '0' && s.peek() <= '9') {
        const std::size_t at = s.pos();
        c.tau = s.integer();
        if (c.tau < 1) {
            throw ParseError("parse error at byte " + std::to_string(at) +
                                 ": expected positive layer count",
                             at, {"positive integer"});
        }
        s.literal("+");
    }
    s.literal("psi");
    if (!s.done()) s.fail({"end of input"});
    c.sizes.assign(static_cast<std::size_t>(c.tau), 0);
    return c;
}

std::string format_ref(const Ref& ref) {
    if (!ref.relative) return std::to_string(ref.value);
    if (ref.value == 0) return "N";
    return "N-" + std::to_string(ref.value);
}

std::string format_tln(const TlnConfig& config) {
    std::string out = "[chi";
    if (!(config.kappa == Ref{true, 0})) out += "^" + format_ref(config.kappa);
    out += "]_" + format_ref(config.nu) + "^";
    if (config.tau > 0) out += std::to_string(config.tau) + "+";
    out += "psi";
    return out;
}

}  // namespace tln
