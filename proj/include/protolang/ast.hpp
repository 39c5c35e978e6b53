#ifndef PROTOLANG_AST_HPP
#define PROTOLANG_AST_HPP

#include <cstdint>
#include <memory>
#include <set>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "protolang/source_span.hpp"

namespace protolang {

struct Protocol;
using ProtocolPtr = std::shared_ptr<const Protocol>;

// Node ids are assigned by assign_ids (pre-order) and survive substitution
// and alpha-renaming untouched, so randomness keyed by node id is stable
// under the structural equivalences of the language.
using NodeId = std::uint32_t;
inline constexpr NodeId kNoNodeId = 0xFFFFFFFFu;

struct VarNode {
    std::string name;
};

// Initial condition (x0, V, T); concentrations in mol/L over the ambient
// CRN's species ordering.
struct InitialNode {
    std::vector<double> conc;
    double volume_l = 0.0;
    double temperature_k = 0.0;
};

struct MixNode {
    ProtocolPtr left, right;
};

struct LetNode {
    std::string var;
    ProtocolPtr bound;
    ProtocolPtr body;
};

// let take, rest = Dispense(source, fraction) in body
struct DispenseNode {
    std::string take_var;
    std::string rest_var;
    ProtocolPtr source;
    double fraction = 0.0;  // in (0,1)
    ProtocolPtr body;
};

// Surface sugar `let take, _ = Dispense(source, fraction) in body`;
// removed by desugar().
struct DispenseDiscardNode {
    std::string take_var;
    ProtocolPtr source;
    double fraction = 0.0;
    ProtocolPtr body;
};

struct EquilibrateNode {
    ProtocolPtr inner;
    double duration_s = 0.0;
};

struct DisposeNode {
    ProtocolPtr inner;
};

struct ObserveNode {
    ProtocolPtr inner;
    unsigned idn = 0;
};

using ProtocolVariant = std::variant<VarNode, InitialNode, MixNode, LetNode, DispenseNode,
                                     DispenseDiscardNode, EquilibrateNode, DisposeNode,
                                     ObserveNode>;

struct Protocol {
    ProtocolVariant node;
    SourceSpan span{};
    NodeId id = kNoNodeId;
};

ProtocolPtr make_protocol(ProtocolVariant v, SourceSpan span = {}, NodeId id = kNoNodeId);

// Convenience constructors (used heavily by tests and the desugarer).
ProtocolPtr var(std::string name);
ProtocolPtr initial(std::vector<double> conc, double volume_l, double temperature_k);
ProtocolPtr mix(ProtocolPtr l, ProtocolPtr r);
ProtocolPtr let(std::string x, ProtocolPtr bound, ProtocolPtr body);
ProtocolPtr dispense(std::string take, std::string rest, ProtocolPtr src, double p,
                     ProtocolPtr body);
ProtocolPtr dispense_discard(std::string take, ProtocolPtr src, double p, ProtocolPtr body);
ProtocolPtr equilibrate(ProtocolPtr inner, double t_s);
ProtocolPtr dispose(ProtocolPtr inner);
ProtocolPtr observe(ProtocolPtr inner, unsigned idn);

// Free variables, defined structurally; Observe and the dispense forms
// extend the published clauses homomorphically.
std::set<std::string> free_vars(const ProtocolPtr& p);

std::size_t count_free(const ProtocolPtr& p, const std::string& x);

// Capture-avoiding substitution p2{x <- p1}. Whenever a binder y != x is
// crossed, y must not occur free in p1; otherwise CaptureError is thrown
// (capture is rejected, never repaired).
ProtocolPtr substitute(const ProtocolPtr& p2, const std::string& x, const ProtocolPtr& p1);

enum class BinderSlot { let_var, take_var, rest_var };

// Renames the binder at `path` (child indices from the root) to `fresh`
// and rewrites its bound occurrence. `fresh` must not occur free in the
// binder's body. Children are indexed: Mix 0/1 = left/right; Let and the
// dispense forms 0/1 = bound-or-source/body; unary nodes 0 = inner.
ProtocolPtr alpha_rename(const ProtocolPtr& p, std::span<const int> path, BinderSlot slot,
                         const std::string& fresh);

struct LinearityViolation {
    enum Kind { duplicated, unused, unbound } kind;
    std::string var;
    std::size_t count = 0;
    SourceSpan span{};
};

// Empty result iff every bound variable occurs free exactly once in its
// scope body and the protocol is closed at top level.
std::vector<LinearityViolation> check_linear(const ProtocolPtr& p);

// Rewrites every `let x,_ = Dispense(P1,p) in P2` into
//   let x,w = Dispense(P1,p) in let x' = Mix(Dispose(w), x) in P2{x<-x'}
// with fresh w and x' (innermost first). Idempotent on sugar-free input.
ProtocolPtr desugar(const ProtocolPtr& p);

// Pre-order id assignment over a (typically desugared) tree.
ProtocolPtr assign_ids(const ProtocolPtr& p);

std::size_t node_count(const ProtocolPtr& p);

// Structural equality ignoring spans and node ids.
bool struct_eq(const ProtocolPtr& a, const ProtocolPtr& b);

// Human-readable one-line rendering used in diagnostics and tests.
std::string to_debug_string(const ProtocolPtr& p);

}  // namespace protolang

#endif
