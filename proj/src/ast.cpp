#include "protolang/ast.hpp"

#include <algorithm>
#include <sstream>

#include "protolang/errors.hpp"
#include "protolang/numfmt.hpp"

namespace protolang {

ProtocolPtr make_protocol(ProtocolVariant v, SourceSpan span, NodeId id) {
    return std::make_shared<const Protocol>(Protocol{std::move(v), span, id});
}

ProtocolPtr var(std::string name) { return make_protocol(VarNode{std::move(name)}); }
ProtocolPtr initial(std::vector<double> conc, double volume_l, double temperature_k) {
    return make_protocol(InitialNode{std::move(conc), volume_l, temperature_k});
}
ProtocolPtr mix(ProtocolPtr l, ProtocolPtr r) {
    return make_protocol(MixNode{std::move(l), std::move(r)});
}
ProtocolPtr let(std::string x, ProtocolPtr bound, ProtocolPtr body) {
    return make_protocol(LetNode{std::move(x), std::move(bound), std::move(body)});
}
ProtocolPtr dispense(std::string take, std::string rest, ProtocolPtr src, double p,
                     ProtocolPtr body) {
    return make_protocol(DispenseNode{std::move(take), std::move(rest), std::move(src), p,
                                      std::move(body)});
}
ProtocolPtr dispense_discard(std::string take, ProtocolPtr src, double p, ProtocolPtr body) {
    return make_protocol(DispenseDiscardNode{std::move(take), std::move(src), p,
                                             std::move(body)});
}
ProtocolPtr equilibrate(ProtocolPtr inner, double t_s) {
    return make_protocol(EquilibrateNode{std::move(inner), t_s});
}
ProtocolPtr dispose(ProtocolPtr inner) { return make_protocol(DisposeNode{std::move(inner)}); }
ProtocolPtr observe(ProtocolPtr inner, unsigned idn) {
    return make_protocol(ObserveNode{std::move(inner), idn});
}

namespace {

void collect_free(const ProtocolPtr& p, std::set<std::string>& out,
                  std::vector<std::string>& shadow) {
    auto shadowed = [&](const std::string& name) {
        return std::find(shadow.begin(), shadow.end(), name) != shadow.end();
    };
    std::visit(
        [&](const auto& n) {
            using T = std::decay_t<decltype(n)>;
            if constexpr (std::is_same_v<T, VarNode>) {
                if (!shadowed(n.name)) out.insert(n.name);
            } else if constexpr (std::is_same_v<T, InitialNode>) {
            } else if constexpr (std::is_same_v<T, MixNode>) {
                collect_free(n.left, out, shadow);
                collect_free(n.right, out, shadow);
            } else if constexpr (std::is_same_v<T, LetNode>) {
                collect_free(n.bound, out, shadow);
                shadow.push_back(n.var);
                collect_free(n.body, out, shadow);
                shadow.pop_back();
            } else if constexpr (std::is_same_v<T, DispenseNode>) {
                collect_free(n.source, out, shadow);
                shadow.push_back(n.take_var);
                shadow.push_back(n.rest_var);
                collect_free(n.body, out, shadow);
                shadow.pop_back();
                shadow.pop_back();
            } else if constexpr (std::is_same_v<T, DispenseDiscardNode>) {
                collect_free(n.source, out, shadow);
                shadow.push_back(n.take_var);
                collect_free(n.body, out, shadow);
                shadow.pop_back();
            } else if constexpr (std::is_same_v<T, EquilibrateNode>) {
                collect_free(n.inner, out, shadow);
            } else if constexpr (std::is_same_v<T, DisposeNode>) {
                collect_free(n.inner, out, shadow);
            } else if constexpr (std::is_same_v<T, ObserveNode>) {
                collect_free(n.inner, out, shadow);
            }
        },
        p->node);
}

std::size_t count_free_impl(const ProtocolPtr& p, const std::string& x) {
    return std::visit(
        [&](const auto& n) -> std::size_t {
            using T = std::decay_t<decltype(n)>;
            if constexpr (std::is_same_v<T, VarNode>) {
                return n.name == x ? 1 : 0;
            } else if constexpr (std::is_same_v<T, InitialNode>) {
                return 0;
            } else if constexpr (std::is_same_v<T, MixNode>) {
                return count_free_impl(n.left, x) + count_free_impl(n.right, x);
            } else if constexpr (std::is_same_v<T, LetNode>) {
                std::size_t c = count_free_impl(n.bound, x);
                if (n.var != x) c += count_free_impl(n.body, x);
                return c;
            } else if constexpr (std::is_same_v<T, DispenseNode>) {
                std::size_t c = count_free_impl(n.source, x);
                if (n.take_var != x && n.rest_var != x) c += count_free_impl(n.body, x);
                return c;
            } else if constexpr (std::is_same_v<T, DispenseDiscardNode>) {
                std::size_t c = count_free_impl(n.source, x);
                if (n.take_var != x) c += count_free_impl(n.body, x);
                return c;
            } else if constexpr (std::is_same_v<T, EquilibrateNode>) {
                return count_free_impl(n.inner, x);
            } else if constexpr (std::is_same_v<T, DisposeNode>) {
                return count_free_impl(n.inner, x);
            } else {
                return count_free_impl(std::get<ObserveNode>(p->node).inner, x);
            }
        },
        p->node);
}

}  // namespace

std::set<std::string> free_vars(const ProtocolPtr& p) {
    std::set<std::string> out;
    std::vector<std::string> shadow;
    collect_free(p, out, shadow);
    return out;
}

std::size_t count_free(const ProtocolPtr& p, const std::string& x) {
    return count_free_impl(p, x);
}

ProtocolPtr substitute(const ProtocolPtr& p2, const std::string& x, const ProtocolPtr& p1) {
    auto check_binder = [&](const std::string& y, const SourceSpan& where) {
        if (y != x && free_vars(p1).count(y))
            throw CaptureError("substituting for '" + x + "' would capture '" + y +
                               "' (line " + std::to_string(where.line_start) + ")");
    };
    return std::visit(
        [&](const auto& n) -> ProtocolPtr {
            using T = std::decay_t<decltype(n)>;
            if constexpr (std::is_same_v<T, VarNode>) {
                return n.name == x ? p1 : p2;
            } else if constexpr (std::is_same_v<T, InitialNode>) {
                return p2;
            } else if constexpr (std::is_same_v<T, MixNode>) {
                return make_protocol(MixNode{substitute(n.left, x, p1),
                                             substitute(n.right, x, p1)},
                                     p2->span, p2->id);
            } else if constexpr (std::is_same_v<T, LetNode>) {
                // Under a shadowing binder the body is untouched.
                if (n.var == x)
                    return make_protocol(LetNode{n.var, substitute(n.bound, x, p1), n.body},
                                         p2->span, p2->id);
                check_binder(n.var, p2->span);
                return make_protocol(LetNode{n.var, substitute(n.bound, x, p1),
                                             substitute(n.body, x, p1)},
                                     p2->span, p2->id);
            } else if constexpr (std::is_same_v<T, DispenseNode>) {
                if (n.take_var == x || n.rest_var == x)
                    return make_protocol(
                        DispenseNode{n.take_var, n.rest_var, substitute(n.source, x, p1),
                                     n.fraction, n.body},
                        p2->span, p2->id);
                check_binder(n.take_var, p2->span);
                check_binder(n.rest_var, p2->span);
                return make_protocol(
                    DispenseNode{n.take_var, n.rest_var, substitute(n.source, x, p1),
                                 n.fraction, substitute(n.body, x, p1)},
                    p2->span, p2->id);
            } else if constexpr (std::is_same_v<T, DispenseDiscardNode>) {
                if (n.take_var == x)
                    return make_protocol(
                        DispenseDiscardNode{n.take_var, substitute(n.source, x, p1),
                                            n.fraction, n.body},
                        p2->span, p2->id);
                check_binder(n.take_var, p2->span);
                return make_protocol(
                    DispenseDiscardNode{n.take_var, substitute(n.source, x, p1), n.fraction,
                                        substitute(n.body, x, p1)},
                    p2->span, p2->id);
            } else if constexpr (std::is_same_v<T, EquilibrateNode>) {
                return make_protocol(EquilibrateNode{substitute(n.inner, x, p1), n.duration_s},
                                     p2->span, p2->id);
            } else if constexpr (std::is_same_v<T, DisposeNode>) {
                return make_protocol(DisposeNode{substitute(n.inner, x, p1)}, p2->span,
                                     p2->id);
            } else {
                const auto& o = std::get<ObserveNode>(p2->node);
                return make_protocol(ObserveNode{substitute(o.inner, x, p1), o.idn}, p2->span,
                                     p2->id);
            }
        },
        p2->node);
}

namespace {

ProtocolPtr alpha_rename_impl(const ProtocolPtr& p, std::span<const int> path,
                              BinderSlot slot, const std::string& fresh) {
    if (path.empty()) {
        if (const auto* l = std::get_if<LetNode>(&p->node)) {
            if (slot != BinderSlot::let_var)
                throw StructuralError("alpha_rename: let binds a single variable");
            if (free_vars(l->body).count(fresh))
                throw CaptureError("alpha_rename: '" + fresh + "' occurs free in the body");
            return make_protocol(LetNode{fresh, l->bound, substitute(l->body, l->var,
                                                                     var(fresh))},
                                 p->span, p->id);
        }
        if (const auto* d = std::get_if<DispenseNode>(&p->node)) {
            if (slot == BinderSlot::let_var)
                throw StructuralError("alpha_rename: dispense binders are take/rest");
            const std::string& old = slot == BinderSlot::take_var ? d->take_var : d->rest_var;
            const std::string& other = slot == BinderSlot::take_var ? d->rest_var : d->take_var;
            if (fresh == other)
                throw CaptureError("alpha_rename: '" + fresh + "' collides with the sibling binder");
            if (free_vars(d->body).count(fresh))
                throw CaptureError("alpha_rename: '" + fresh + "' occurs free in the body");
            ProtocolPtr body = substitute(d->body, old, var(fresh));
            if (slot == BinderSlot::take_var)
                return make_protocol(DispenseNode{fresh, d->rest_var, d->source, d->fraction,
                                                  body},
                                     p->span, p->id);
            return make_protocol(DispenseNode{d->take_var, fresh, d->source, d->fraction,
                                              body},
                                 p->span, p->id);
        }
        throw StructuralError("alpha_rename: node at path is not a binder");
    }

    int idx = path.front();
    auto rest = path.subspan(1);
    auto recurse = [&](const ProtocolPtr& child) {
        return alpha_rename_impl(child, rest, slot, fresh);
    };
    return std::visit(
        [&](const auto& n) -> ProtocolPtr {
            using T = std::decay_t<decltype(n)>;
            if constexpr (std::is_same_v<T, MixNode>) {
                if (idx == 0) return make_protocol(MixNode{recurse(n.left), n.right}, p->span, p->id);
                if (idx == 1) return make_protocol(MixNode{n.left, recurse(n.right)}, p->span, p->id);
            } else if constexpr (std::is_same_v<T, LetNode>) {
                if (idx == 0) return make_protocol(LetNode{n.var, recurse(n.bound), n.body}, p->span, p->id);
                if (idx == 1) return make_protocol(LetNode{n.var, n.bound, recurse(n.body)}, p->span, p->id);
            } else if constexpr (std::is_same_v<T, DispenseNode>) {
                if (idx == 0)
                    return make_protocol(DispenseNode{n.take_var, n.rest_var, recurse(n.source),
                                                      n.fraction, n.body},
                                         p->span, p->id);
                if (idx == 1)
                    return make_protocol(DispenseNode{n.take_var, n.rest_var, n.source,
                                                      n.fraction, recurse(n.body)},
                                         p->span, p->id);
            } else if constexpr (std::is_same_v<T, DispenseDiscardNode>) {
                if (idx == 0)
                    return make_protocol(DispenseDiscardNode{n.take_var, recurse(n.source),
                                                             n.fraction, n.body},
                                         p->span, p->id);
                if (idx == 1)
                    return make_protocol(DispenseDiscardNode{n.take_var, n.source, n.fraction,
                                                             recurse(n.body)},
                                         p->span, p->id);
            } else if constexpr (std::is_same_v<T, EquilibrateNode>) {
                if (idx == 0)
                    return make_protocol(EquilibrateNode{recurse(n.inner), n.duration_s},
                                         p->span, p->id);
            } else if constexpr (std::is_same_v<T, DisposeNode>) {
                if (idx == 0) return make_protocol(DisposeNode{recurse(n.inner)}, p->span, p->id);
            } else if constexpr (std::is_same_v<T, ObserveNode>) {
                if (idx == 0)
                    return make_protocol(ObserveNode{recurse(n.inner), n.idn}, p->span, p->id);
            }
            throw StructuralError("alpha_rename: invalid path");
        },
        p->node);
}

void check_linear_impl(const ProtocolPtr& p, std::vector<LinearityViolation>& out) {
    std::visit(
        [&](const auto& n) {
            using T = std::decay_t<decltype(n)>;
            auto check_use = [&](const std::string& v, const ProtocolPtr& body) {
                std::size_t c = count_free(body, v);
                if (c != 1)
                    out.push_back({c == 0 ? LinearityViolation::unused
                                          : LinearityViolation::duplicated,
                                   v, c, p->span});
            };
            if constexpr (std::is_same_v<T, MixNode>) {
                check_linear_impl(n.left, out);
                check_linear_impl(n.right, out);
            } else if constexpr (std::is_same_v<T, LetNode>) {
                check_use(n.var, n.body);
                check_linear_impl(n.bound, out);
                check_linear_impl(n.body, out);
            } else if constexpr (std::is_same_v<T, DispenseNode>) {
                check_use(n.take_var, n.body);
                check_use(n.rest_var, n.body);
                check_linear_impl(n.source, out);
                check_linear_impl(n.body, out);
            } else if constexpr (std::is_same_v<T, DispenseDiscardNode>) {
                check_use(n.take_var, n.body);
                check_linear_impl(n.source, out);
                check_linear_impl(n.body, out);
            } else if constexpr (std::is_same_v<T, EquilibrateNode>) {
                check_linear_impl(n.inner, out);
            } else if constexpr (std::is_same_v<T, DisposeNode>) {
                check_linear_impl(n.inner, out);
            } else if constexpr (std::is_same_v<T, ObserveNode>) {
                check_linear_impl(n.inner, out);
            }
        },
        p->node);
}

void collect_names(const ProtocolPtr& p, std::set<std::string>& out) {
    std::visit(
        [&](const auto& n) {
            using T = std::decay_t<decltype(n)>;
            if constexpr (std::is_same_v<T, VarNode>) {
                out.insert(n.name);
            } else if constexpr (std::is_same_v<T, MixNode>) {
                collect_names(n.left, out);
                collect_names(n.right, out);
            } else if constexpr (std::is_same_v<T, LetNode>) {
                out.insert(n.var);
                collect_names(n.bound, out);
                collect_names(n.body, out);
            } else if constexpr (std::is_same_v<T, DispenseNode>) {
                out.insert(n.take_var);
                out.insert(n.rest_var);
                collect_names(n.source, out);
                collect_names(n.body, out);
            } else if constexpr (std::is_same_v<T, DispenseDiscardNode>) {
                out.insert(n.take_var);
                collect_names(n.source, out);
                collect_names(n.body, out);
            } else if constexpr (std::is_same_v<T, EquilibrateNode>) {
                collect_names(n.inner, out);
            } else if constexpr (std::is_same_v<T, DisposeNode>) {
                collect_names(n.inner, out);
            } else if constexpr (std::is_same_v<T, ObserveNode>) {
                collect_names(n.inner, out);
            }
        },
        p->node);
}

struct FreshNames {
    std::set<std::string> used;
    std::size_t counter = 0;

    std::string fresh(const std::string& base) {
        for (;; ++counter) {
            std::string name = base + std::to_string(counter);
            if (!used.count(name)) {
                used.insert(name);
                ++counter;
                return name;
            }
        }
    }
};

ProtocolPtr desugar_impl(const ProtocolPtr& p, FreshNames& names) {
    return std::visit(
        [&](const auto& n) -> ProtocolPtr {
            using T = std::decay_t<decltype(n)>;
            if constexpr (std::is_same_v<T, VarNode> || std::is_same_v<T, InitialNode>) {
                return p;
            } else if constexpr (std::is_same_v<T, MixNode>) {
                return make_protocol(MixNode{desugar_impl(n.left, names),
                                             desugar_impl(n.right, names)},
                                     p->span, p->id);
            } else if constexpr (std::is_same_v<T, LetNode>) {
                return make_protocol(LetNode{n.var, desugar_impl(n.bound, names),
                                             desugar_impl(n.body, names)},
                                     p->span, p->id);
            } else if constexpr (std::is_same_v<T, DispenseNode>) {
                return make_protocol(DispenseNode{n.take_var, n.rest_var,
                                                  desugar_impl(n.source, names), n.fraction,
                                                  desugar_impl(n.body, names)},
                                     p->span, p->id);
            } else if constexpr (std::is_same_v<T, DispenseDiscardNode>) {
                // innermost first
                ProtocolPtr src = desugar_impl(n.source, names);
                ProtocolPtr body = desugar_impl(n.body, names);
                std::string waste = names.fresh("_w");
                std::string rebound = names.fresh(n.take_var + "_");
                // let x,w = Dispense(src, p) in
                //   let x' = Mix(Dispose(w), x) in body{x <- x'}
                ProtocolPtr inner = make_protocol(
                    LetNode{rebound,
                            make_protocol(MixNode{make_protocol(DisposeNode{var(waste)},
                                                                p->span),
                                                  var(n.take_var)},
                                          p->span),
                            substitute(body, n.take_var, var(rebound))},
                    p->span);
                return make_protocol(DispenseNode{n.take_var, waste, src, n.fraction, inner},
                                     p->span, p->id);
            } else if constexpr (std::is_same_v<T, EquilibrateNode>) {
                return make_protocol(EquilibrateNode{desugar_impl(n.inner, names),
                                                     n.duration_s},
                                     p->span, p->id);
            } else if constexpr (std::is_same_v<T, DisposeNode>) {
                return make_protocol(DisposeNode{desugar_impl(n.inner, names)}, p->span,
                                     p->id);
            } else {
                const auto& o = std::get<ObserveNode>(p->node);
                return make_protocol(ObserveNode{desugar_impl(o.inner, names), o.idn},
                                     p->span, p->id);
            }
        },
        p->node);
}

ProtocolPtr assign_ids_impl(const ProtocolPtr& p, NodeId& next) {
    NodeId my = next++;
    return std::visit(
        [&](const auto& n) -> ProtocolPtr {
            using T = std::decay_t<decltype(n)>;
            if constexpr (std::is_same_v<T, VarNode> || std::is_same_v<T, InitialNode>) {
                return make_protocol(n, p->span, my);
            } else if constexpr (std::is_same_v<T, MixNode>) {
                auto l = assign_ids_impl(n.left, next);
                auto r = assign_ids_impl(n.right, next);
                return make_protocol(MixNode{l, r}, p->span, my);
            } else if constexpr (std::is_same_v<T, LetNode>) {
                auto b = assign_ids_impl(n.bound, next);
                auto body = assign_ids_impl(n.body, next);
                return make_protocol(LetNode{n.var, b, body}, p->span, my);
            } else if constexpr (std::is_same_v<T, DispenseNode>) {
                auto s = assign_ids_impl(n.source, next);
                auto body = assign_ids_impl(n.body, next);
                return make_protocol(DispenseNode{n.take_var, n.rest_var, s, n.fraction, body},
                                     p->span, my);
            } else if constexpr (std::is_same_v<T, DispenseDiscardNode>) {
                auto s = assign_ids_impl(n.source, next);
                auto body = assign_ids_impl(n.body, next);
                return make_protocol(DispenseDiscardNode{n.take_var, s, n.fraction, body},
                                     p->span, my);
            } else if constexpr (std::is_same_v<T, EquilibrateNode>) {
                auto inner = assign_ids_impl(n.inner, next);
                return make_protocol(EquilibrateNode{inner, n.duration_s}, p->span, my);
            } else if constexpr (std::is_same_v<T, DisposeNode>) {
                auto inner = assign_ids_impl(n.inner, next);
                return make_protocol(DisposeNode{inner}, p->span, my);
            } else {
                const auto& o = std::get<ObserveNode>(p->node);
                auto inner = assign_ids_impl(o.inner, next);
                return make_protocol(ObserveNode{inner, o.idn}, p->span, my);
            }
        },
        p->node);
}

}  // namespace

ProtocolPtr alpha_rename(const ProtocolPtr& p, std::span<const int> path, BinderSlot slot,
                         const std::string& fresh) {
    return alpha_rename_impl(p, path, slot, fresh);
}

std::vector<LinearityViolation> check_linear(const ProtocolPtr& p) {
    std::vector<LinearityViolation> out;
    check_linear_impl(p, out);
    for (const std::string& v : free_vars(p))
        out.push_back({LinearityViolation::unbound, v, 0, p->span});
    return out;
}

ProtocolPtr desugar(const ProtocolPtr& p) {
    FreshNames names;
    collect_names(p, names.used);
    return desugar_impl(p, names);
}

ProtocolPtr assign_ids(const ProtocolPtr& p) {
    NodeId next = 0;
    return assign_ids_impl(p, next);
}

std::size_t node_count(const ProtocolPtr& p) {
    std::size_t c = 1;
    std::visit(
        [&](const auto& n) {
            using T = std::decay_t<decltype(n)>;
            if constexpr (std::is_same_v<T, MixNode>) {
                c += node_count(n.left) + node_count(n.right);
            } else if constexpr (std::is_same_v<T, LetNode>) {
                c += node_count(n.bound) + node_count(n.body);
            } else if constexpr (std::is_same_v<T, DispenseNode>) {
                c += node_count(n.source) + node_count(n.body);
            } else if constexpr (std::is_same_v<T, DispenseDiscardNode>) {
                c += node_count(n.source) + node_count(n.body);
            } else if constexpr (std::is_same_v<T, EquilibrateNode>) {
                c += node_count(n.inner);
            } else if constexpr (std::is_same_v<T, DisposeNode>) {
                c += node_count(n.inner);
            } else if constexpr (std::is_same_v<T, ObserveNode>) {
                c += node_count(n.inner);
            }
        },
        p->node);
    return c;
}

bool struct_eq(const ProtocolPtr& a, const ProtocolPtr& b) {
    if (a->node.index() != b->node.index()) return false;
    return std::visit(
        [&](const auto& na) -> bool {
            using T = std::decay_t<decltype(na)>;
            const auto& nb = std::get<T>(b->node);
            if constexpr (std::is_same_v<T, VarNode>) {
                return na.name == nb.name;
            } else if constexpr (std::is_same_v<T, InitialNode>) {
                return na.conc == nb.conc && na.volume_l == nb.volume_l &&
                       na.temperature_k == nb.temperature_k;
            } else if constexpr (std::is_same_v<T, MixNode>) {
                return struct_eq(na.left, nb.left) && struct_eq(na.right, nb.right);
            } else if constexpr (std::is_same_v<T, LetNode>) {
                return na.var == nb.var && struct_eq(na.bound, nb.bound) &&
                       struct_eq(na.body, nb.body);
            } else if constexpr (std::is_same_v<T, DispenseNode>) {
                return na.take_var == nb.take_var && na.rest_var == nb.rest_var &&
                       na.fraction == nb.fraction && struct_eq(na.source, nb.source) &&
                       struct_eq(na.body, nb.body);
            } else if constexpr (std::is_same_v<T, DispenseDiscardNode>) {
                return na.take_var == nb.take_var && na.fraction == nb.fraction &&
                       struct_eq(na.source, nb.source) && struct_eq(na.body, nb.body);
            } else if constexpr (std::is_same_v<T, EquilibrateNode>) {
                return na.duration_s == nb.duration_s && struct_eq(na.inner, nb.inner);
            } else if constexpr (std::is_same_v<T, DisposeNode>) {
                return struct_eq(na.inner, nb.inner);
            } else {
                const auto& oa = std::get<ObserveNode>(a->node);
                const auto& ob = std::get<ObserveNode>(b->node);
                return oa.idn == ob.idn && struct_eq(oa.inner, ob.inner);
            }
        },
        a->node);
}

std::string to_debug_string(const ProtocolPtr& p) {
    std::ostringstream os;
    std::visit(
        [&](const auto& n) {
            using T = std::decay_t<decltype(n)>;
            if constexpr (std::is_same_v<T, VarNode>) {
                os << n.name;
            } else if constexpr (std::is_same_v<T, InitialNode>) {
                os << "sample([";
                for (std::size_t i = 0; i < n.conc.size(); ++i) {
                    if (i) os << ",";
                    os << format_double(n.conc[i]);
                }
                os << "]; " << format_double(n.volume_l) << " L; "
                   << format_double(n.temperature_k) << " K)";
            } else if constexpr (std::is_same_v<T, MixNode>) {
                os << "Mix(" << to_debug_string(n.left) << ", " << to_debug_string(n.right)
                   << ")";
            } else if constexpr (std::is_same_v<T, LetNode>) {
                os << "let " << n.var << " = " << to_debug_string(n.bound) << " in "
                   << to_debug_string(n.body);
            } else if constexpr (std::is_same_v<T, DispenseNode>) {
                os << "let " << n.take_var << ", " << n.rest_var << " = Dispense("
                   << to_debug_string(n.source) << ", " << format_double(n.fraction) << ") in "
                   << to_debug_string(n.body);
            } else if constexpr (std::is_same_v<T, DispenseDiscardNode>) {
                os << "let " << n.take_var << ", _ = Dispense(" << to_debug_string(n.source)
                   << ", " << format_double(n.fraction) << ") in " << to_debug_string(n.body);
            } else if constexpr (std::is_same_v<T, EquilibrateNode>) {
                os << "Equilibrate(" << to_debug_string(n.inner) << ", "
                   << format_double(n.duration_s) << " s)";
            } else if constexpr (std::is_same_v<T, DisposeNode>) {
                os << "Dispose(" << to_debug_string(n.inner) << ")";
            } else {
                const auto& o = std::get<ObserveNode>(p->node);
                os << "Observe(" << to_debug_string(o.inner) << ", " << o.idn << ")";
            }
        },
        p->node);
    return os.str();
}

}  // namespace protolang
