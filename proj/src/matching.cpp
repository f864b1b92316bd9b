#include "xtrial/matching.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstdlib>
#include <limits>

#include "xtrial/core.hpp"

namespace xtrial::matching {

namespace {

// Blossom algorithm for maximum-weight matching, following the classic
// primal-dual formulation (Galil 1986). Vertices are 0..n-1; ids n..2n-1
// are nontrivial blossoms. Edge slacks and dual variables are kept as
// integers throughout; duals are premultiplied by two so every update
// stays integral.
class BlossomMatcher {
public:
    BlossomMatcher(int n, const std::vector<Edge>& edges, bool max_cardinality)
        : n_(n), edges_(edges), max_cardinality_(max_cardinality) {}

    std::vector<int> solve() {
        if (n_ == 0 || edges_.empty()) return std::vector<int>(n_, -1);
        init();
        for (int stage = 0; stage < n_; ++stage) {
            std::fill(label_.begin(), label_.end(), 0);
            std::fill(best_edge_.begin(), best_edge_.end(), -1);
            for (int b = n_; b < 2 * n_; ++b) blossom_best_edges_[b].clear();
            std::fill(allow_edge_.begin(), allow_edge_.end(), false);
            queue_.clear();

            for (int v = 0; v < n_; ++v) {
                if (mate_[v] == -1 && label_[in_blossom_[v]] == 0) assign_label(v, 1, -1);
            }

            bool augmented = false;
            while (true) {
                while (!queue_.empty() && !augmented) {
                    const int v = queue_.back();
                    queue_.pop_back();
                    assert(label_[in_blossom_[v]] == 1);
                    for (const int p : neighb_end_[v]) {
                        const int k = p / 2;
                        const int w = endpoint_[p];
                        if (in_blossom_[v] == in_blossom_[w]) continue;
                        std::int64_t kslack = 0;
                        if (!allow_edge_[k]) {
                            kslack = slack(k);
                            if (kslack <= 0) allow_edge_[k] = true;
                        }
                        if (allow_edge_[k]) {
                            if (label_[in_blossom_[w]] == 0) {
                                assign_label(w, 2, p ^ 1);
                            } else if (label_[in_blossom_[w]] == 1) {
                                const int base = scan_blossom(v, w);
                                if (base >= 0) {
                                    add_blossom(base, k);
                                } else {
                                    augment_matching(k);
                                    augmented = true;
                                    break;
                                }
                            } else if (label_[w] == 0) {
                                assert(label_[in_blossom_[w]] == 2);
                                label_[w] = 2;
                                label_end_[w] = p ^ 1;
                            }
                        } else if (label_[in_blossom_[w]] == 1) {
                            const int b = in_blossom_[v];
                            if (best_edge_[b] == -1 || kslack < slack(best_edge_[b])) {
                                best_edge_[b] = k;
                            }
                        } else if (label_[w] == 0) {
                            if (best_edge_[w] == -1 || kslack < slack(best_edge_[w])) {
                                best_edge_[w] = k;
                            }
                        }
                    }
                }
                if (augmented) break;

                // No augmenting path under the current duals; relax them.
                int delta_type = -1;
                std::int64_t delta = 0;
                int delta_edge = -1;
                int delta_blossom = -1;

                if (!max_cardinality_) {
                    delta_type = 1;
                    delta = *std::min_element(dual_.begin(), dual_.begin() + n_);
                    delta = std::max<std::int64_t>(delta, 0);
                }
                for (int v = 0; v < n_; ++v) {
                    if (label_[in_blossom_[v]] == 0 && best_edge_[v] != -1) {
                        const std::int64_t d = slack(best_edge_[v]);
                        if (delta_type == -1 || d < delta) {
                            delta = d;
                            delta_type = 2;
                            delta_edge = best_edge_[v];
                        }
                    }
                }
                for (int b = 0; b < 2 * n_; ++b) {
                    if (blossom_parent_[b] == -1 && label_[b] == 1 && best_edge_[b] != -1) {
                        const std::int64_t kslack = slack(best_edge_[b]);
                        if (kslack % 2 != 0) {
                            throw NumericError("matching: odd S-S slack, integer duals broken");
                        }
                        const std::int64_t d = kslack / 2;
                        if (delta_type == -1 || d < delta) {
                            delta = d;
                            delta_type = 3;
                            delta_edge = best_edge_[b];
                        }
                    }
                }
                for (int b = n_; b < 2 * n_; ++b) {
                    if (blossom_base_[b] >= 0 && blossom_parent_[b] == -1 && label_[b] == 2 &&
                        (delta_type == -1 || dual_[b] < delta)) {
                        delta = dual_[b];
                        delta_type = 4;
                        delta_blossom = b;
                    }
                }
                if (delta_type == -1) {
                    // Max-cardinality optimum reached; one final feasibility pass.
                    assert(max_cardinality_);
                    delta_type = 1;
                    delta = std::max<std::int64_t>(
                        0, *std::min_element(dual_.begin(), dual_.begin() + n_));
                }

                for (int v = 0; v < n_; ++v) {
                    const int lbl = label_[in_blossom_[v]];
                    if (lbl == 1) {
                        dual_[v] -= delta;
                    } else if (lbl == 2) {
                        dual_[v] += delta;
                    }
                }
                for (int b = n_; b < 2 * n_; ++b) {
                    if (blossom_base_[b] >= 0 && blossom_parent_[b] == -1) {
                        if (label_[b] == 1) {
                            dual_[b] += delta;
                        } else if (label_[b] == 2) {
                            dual_[b] -= delta;
                        }
                    }
                }

                if (delta_type == 1) break;
                if (delta_type == 2) {
                    allow_edge_[delta_edge] = true;
                    int i = edges_[delta_edge].u;
                    if (label_[in_blossom_[i]] == 0) i = edges_[delta_edge].v;
                    assert(label_[in_blossom_[i]] == 1);
                    queue_.push_back(i);
                } else if (delta_type == 3) {
                    allow_edge_[delta_edge] = true;
                    const int i = edges_[delta_edge].u;
                    assert(label_[in_blossom_[i]] == 1);
                    queue_.push_back(i);
                } else {
                    expand_blossom(delta_blossom, false);
                }
            }

            if (!augmented) break;

            for (int b = n_; b < 2 * n_; ++b) {
                if (blossom_parent_[b] == -1 && blossom_base_[b] >= 0 && label_[b] == 1 &&
                    dual_[b] == 0) {
                    expand_blossom(b, true);
                }
            }
        }

        std::vector<int> result(n_, -1);
        for (int v = 0; v < n_; ++v) {
            if (mate_[v] >= 0) result[v] = endpoint_[mate_[v]];
        }
        for (int v = 0; v < n_; ++v) {
            assert(result[v] == -1 || result[result[v]] == v);
        }
        return result;
    }

private:
    void init() {
        const int nedge = static_cast<int>(edges_.size());
        max_weight_ = 0;
        for (const auto& e : edges_) max_weight_ = std::max(max_weight_, e.weight);

        endpoint_.resize(2 * static_cast<std::size_t>(nedge));
        for (int k = 0; k < nedge; ++k) {
            endpoint_[2 * k] = edges_[k].u;
            endpoint_[2 * k + 1] = edges_[k].v;
        }
        neighb_end_.assign(n_, {});
        for (int k = 0; k < nedge; ++k) {
            neighb_end_[edges_[k].u].push_back(2 * k + 1);
            neighb_end_[edges_[k].v].push_back(2 * k);
        }

        mate_.assign(n_, -1);
        label_.assign(2 * n_, 0);
        label_end_.assign(2 * n_, -1);
        in_blossom_.resize(n_);
        for (int v = 0; v < n_; ++v) in_blossom_[v] = v;
        blossom_parent_.assign(2 * n_, -1);
        blossom_childs_.assign(2 * n_, {});
        blossom_base_.assign(2 * n_, -1);
        for (int v = 0; v < n_; ++v) blossom_base_[v] = v;
        blossom_endps_.assign(2 * n_, {});
        best_edge_.assign(2 * n_, -1);
        blossom_best_edges_.assign(2 * n_, {});
        unused_blossoms_.clear();
        for (int b = n_; b < 2 * n_; ++b) unused_blossoms_.push_back(b);
        dual_.assign(2 * n_, 0);
        for (int v = 0; v < n_; ++v) dual_[v] = max_weight_;
        allow_edge_.assign(nedge, false);
        queue_.clear();
    }

    std::int64_t slack(int k) const {
        return dual_[edges_[k].u] + dual_[edges_[k].v] - 2 * edges_[k].weight;
    }

    void blossom_leaves(int b, std::vector<int>& out) const {
        if (b < n_) {
            out.push_back(b);
            return;
        }
        for (const int t : blossom_childs_[b]) blossom_leaves(t, out);
    }

    void assign_label(int w, int t, int p) {
        const int b = in_blossom_[w];
        assert(label_[w] == 0 && label_[b] == 0);
        label_[w] = t;
        label_[b] = t;
        label_end_[w] = p;
        label_end_[b] = p;
        best_edge_[w] = -1;
        best_edge_[b] = -1;
        if (t == 1) {
            std::vector<int> leaves;
            blossom_leaves(b, leaves);
            queue_.insert(queue_.end(), leaves.begin(), leaves.end());
        } else {
            const int base = blossom_base_[b];
            assert(mate_[base] >= 0);
            assign_label(endpoint_[mate_[base]], 1, mate_[base] ^ 1);
        }
    }

    // Trace back from v and w to find a common ancestor (new blossom base)
    // or conclude the paths hit distinct roots (augmenting path, returns -1).
    int scan_blossom(int v, int w) {
        std::vector<int> path;
        int base = -1;
        while (v != -1 || w != -1) {
            int b = in_blossom_[v];
            if (label_[b] & 4) {
                base = blossom_base_[b];
                break;
            }
            assert(label_[b] == 1);
            path.push_back(b);
            label_[b] = 5;
            assert(label_end_[b] == mate_[blossom_base_[b]]);
            if (label_end_[b] == -1) {
                v = -1;
            } else {
                v = endpoint_[label_end_[b]];
                b = in_blossom_[v];
                assert(label_[b] == 2);
                assert(label_end_[b] >= 0);
                v = endpoint_[label_end_[b]];
            }
            if (w != -1) std::swap(v, w);
        }
        for (const int b : path) label_[b] = 1;
        return base;
    }

    void add_blossom(int base, int k) {
        int v = edges_[k].u;
        int w = edges_[k].v;
        const int bb = in_blossom_[base];
        int bv = in_blossom_[v];
        int bw = in_blossom_[w];
        const int b = unused_blossoms_.back();
        unused_blossoms_.pop_back();

        blossom_base_[b] = base;
        blossom_parent_[b] = -1;
        blossom_parent_[bb] = b;

        std::vector<int> path;
        std::vector<int> endps;
        while (bv != bb) {
            blossom_parent_[bv] = b;
            path.push_back(bv);
            endps.push_back(label_end_[bv]);
            assert(label_[bv] == 2 ||
                   (label_[bv] == 1 && label_end_[bv] == mate_[blossom_base_[bv]]));
            assert(label_end_[bv] >= 0);
            v = endpoint_[label_end_[bv]];
            bv = in_blossom_[v];
        }
        path.push_back(bb);
        std::reverse(path.begin(), path.end());
        std::reverse(endps.begin(), endps.end());
        endps.push_back(2 * k);
        while (bw != bb) {
            blossom_parent_[bw] = b;
            path.push_back(bw);
            endps.push_back(label_end_[bw] ^ 1);
            assert(label_[bw] == 2 ||
                   (label_[bw] == 1 && label_end_[bw] == mate_[blossom_base_[bw]]));
            assert(label_end_[bw] >= 0);
            w = endpoint_[label_end_[bw]];
            bw = in_blossom_[w];
        }

        blossom_childs_[b] = std::move(path);
        blossom_endps_[b] = std::move(endps);
        label_[b] = 1;
        label_end_[b] = label_end_[bb];
        dual_[b] = 0;

        std::vector<int> leaves;
        blossom_leaves(b, leaves);
        for (const int leaf : leaves) {
            if (label_[in_blossom_[leaf]] == 2) queue_.push_back(leaf);
            in_blossom_[leaf] = b;
        }

        // Merge least-slack edge lists of the sub-blossoms.
        std::vector<int> best_edge_to(2 * n_, -1);
        for (const int child : blossom_childs_[b]) {
            std::vector<std::vector<int>> nblists;
            if (blossom_best_edges_[child].empty()) {
                std::vector<int> child_leaves;
                blossom_leaves(child, child_leaves);
                for (const int leaf : child_leaves) {
                    std::vector<int> ks;
                    ks.reserve(neighb_end_[leaf].size());
                    for (const int p : neighb_end_[leaf]) ks.push_back(p / 2);
                    nblists.push_back(std::move(ks));
                }
            } else {
                nblists.push_back(blossom_best_edges_[child]);
            }
            for (const auto& nblist : nblists) {
                for (const int ek : nblist) {
                    int i = edges_[ek].u;
                    int j = edges_[ek].v;
                    if (in_blossom_[j] == b) std::swap(i, j);
                    const int bj = in_blossom_[j];
                    if (bj != b && label_[bj] == 1 &&
                        (best_edge_to[bj] == -1 || slack(ek) < slack(best_edge_to[bj]))) {
                        best_edge_to[bj] = ek;
                    }
                }
            }
            blossom_best_edges_[child].clear();
            best_edge_[child] = -1;
        }
        blossom_best_edges_[b].clear();
        for (const int ek : best_edge_to) {
            if (ek != -1) blossom_best_edges_[b].push_back(ek);
        }
        best_edge_[b] = -1;
        for (const int ek : blossom_best_edges_[b]) {
            if (best_edge_[b] == -1 || slack(ek) < slack(best_edge_[b])) best_edge_[b] = ek;
        }
    }

    void expand_blossom(int b, bool endstage) {
        for (const int s : blossom_childs_[b]) {
            blossom_parent_[s] = -1;
            if (s < n_) {
                in_blossom_[s] = s;
            } else if (endstage && dual_[s] == 0) {
                expand_blossom(s, endstage);
            } else {
                std::vector<int> leaves;
                blossom_leaves(s, leaves);
                for (const int leaf : leaves) in_blossom_[leaf] = s;
            }
        }
        // A T-blossom expanded mid-stage must relabel its children along the
        // alternating path from the entry edge to the base.
        if (!endstage && label_[b] == 2) {
            assert(label_end_[b] >= 0);
            const int entry_child = in_blossom_[endpoint_[label_end_[b] ^ 1]];
            const int len = static_cast<int>(blossom_childs_[b].size());
            int j = 0;
            for (; j < len; ++j) {
                if (blossom_childs_[b][j] == entry_child) break;
            }
            int jstep, endptrick;
            if (j & 1) {
                j -= len;
                jstep = 1;
                endptrick = 0;
            } else {
                jstep = -1;
                endptrick = 1;
            }
            auto child_at = [&](int idx) {
                return blossom_childs_[b][static_cast<std::size_t>(((idx % len) + len) % len)];
            };
            auto endp_at = [&](int idx) {
                return blossom_endps_[b][static_cast<std::size_t>(((idx % len) + len) % len)];
            };
            int p = label_end_[b];
            while (j != 0) {
                label_[endpoint_[p ^ 1]] = 0;
                label_[endpoint_[endp_at(j - endptrick) ^ endptrick ^ 1]] = 0;
                assign_label(endpoint_[p ^ 1], 2, p);
                allow_edge_[endp_at(j - endptrick) / 2] = true;
                j += jstep;
                p = endp_at(j - endptrick) ^ endptrick;
                allow_edge_[p / 2] = true;
                j += jstep;
            }
            const int bv = child_at(j);
            label_[endpoint_[p ^ 1]] = 2;
            label_[bv] = 2;
            label_end_[endpoint_[p ^ 1]] = p;
            label_end_[bv] = p;
            best_edge_[bv] = -1;
            j += jstep;
            while (child_at(j) != entry_child) {
                const int bw = child_at(j);
                if (label_[bw] == 1) {
                    j += jstep;
                    continue;
                }
                std::vector<int> leaves;
                blossom_leaves(bw, leaves);
                int labeled = -1;
                for (const int leaf : leaves) {
                    if (label_[leaf] != 0) {
                        labeled = leaf;
                        break;
                    }
                }
                if (labeled != -1) {
                    assert(label_[labeled] == 2);
                    assert(in_blossom_[labeled] == bw);
                    label_[labeled] = 0;
                    label_[endpoint_[mate_[blossom_base_[bw]]]] = 0;
                    assign_label(labeled, 2, label_end_[labeled]);
                }
                j += jstep;
            }
        }
        label_[b] = -1;
        label_end_[b] = -1;
        blossom_childs_[b].clear();
        blossom_endps_[b].clear();
        blossom_base_[b] = -1;
        blossom_best_edges_[b].clear();
        best_edge_[b] = -1;
        unused_blossoms_.push_back(b);
    }

    // Swap matched/unmatched edges over the alternating path through blossom b
    // between vertex v and the base vertex.
    void augment_blossom(int b, int v) {
        int t = v;
        while (blossom_parent_[t] != b) t = blossom_parent_[t];
        if (t >= n_) augment_blossom(t, v);

        const int len = static_cast<int>(blossom_childs_[b].size());
        int i = 0;
        for (; i < len; ++i) {
            if (blossom_childs_[b][i] == t) break;
        }
        int j = i;
        int jstep, endptrick;
        if (i & 1) {
            j -= len;
            jstep = 1;
            endptrick = 0;
        } else {
            jstep = -1;
            endptrick = 1;
        }
        auto child_at = [&](int idx) {
            return blossom_childs_[b][static_cast<std::size_t>(((idx % len) + len) % len)];
        };
        auto endp_at = [&](int idx) {
            return blossom_endps_[b][static_cast<std::size_t>(((idx % len) + len) % len)];
        };
        while (j != 0) {
            j += jstep;
            int tt = child_at(j);
            const int p = endp_at(j - endptrick) ^ endptrick;
            if (tt >= n_) augment_blossom(tt, endpoint_[p]);
            j += jstep;
            tt = child_at(j);
            if (tt >= n_) augment_blossom(tt, endpoint_[p ^ 1]);
            mate_[endpoint_[p]] = p ^ 1;
            mate_[endpoint_[p ^ 1]] = p;
        }
        std::rotate(blossom_childs_[b].begin(), blossom_childs_[b].begin() + i,
                    blossom_childs_[b].end());
        std::rotate(blossom_endps_[b].begin(), blossom_endps_[b].begin() + i,
                    blossom_endps_[b].end());
        blossom_base_[b] = blossom_base_[blossom_childs_[b][0]];
        assert(blossom_base_[b] == v);
    }

    void augment_matching(int k) {
        const int v = edges_[k].u;
        const int w = edges_[k].v;
        const std::pair<int, int> starts[2] = {{v, 2 * k + 1}, {w, 2 * k}};
        for (auto [s, p] : starts) {
            while (true) {
                const int bs = in_blossom_[s];
                assert(label_[bs] == 1);
                assert(label_end_[bs] == mate_[blossom_base_[bs]]);
                if (bs >= n_) augment_blossom(bs, s);
                mate_[s] = p;
                if (label_end_[bs] == -1) break;  // reached a root
                const int t = endpoint_[label_end_[bs]];
                const int bt = in_blossom_[t];
                assert(label_[bt] == 2);
                assert(label_end_[bt] >= 0);
                s = endpoint_[label_end_[bt]];
                const int j = endpoint_[label_end_[bt] ^ 1];
                assert(blossom_base_[bt] == t);
                if (bt >= n_) augment_blossom(bt, j);
                mate_[j] = label_end_[bt];
                p = label_end_[bt] ^ 1;
            }
        }
    }

    const int n_;
    std::vector<Edge> edges_;
    const bool max_cardinality_;

    std::int64_t max_weight_ = 0;
    std::vector<int> endpoint_;
    std::vector<std::vector<int>> neighb_end_;
    std::vector<int> mate_;
    std::vector<int> label_;
    std::vector<int> label_end_;
    std::vector<int> in_blossom_;
    std::vector<int> blossom_parent_;
    std::vector<std::vector<int>> blossom_childs_;
    std::vector<int> blossom_base_;
    std::vector<std::vector<int>> blossom_endps_;
    std::vector<int> best_edge_;
    std::vector<std::vector<int>> blossom_best_edges_;
    std::vector<int> unused_blossoms_;
    std::vector<std::int64_t> dual_;
    std::vector<bool> allow_edge_;
    std::vector<int> queue_;
};

}  // namespace

std::vector<int> max_weight_matching(int n, const std::vector<Edge>& edges,
                                     bool max_cardinality) {
    for (const auto& e : edges) {
        if (e.u < 0 || e.u >= n || e.v < 0 || e.v >= n || e.u == e.v) {
            throw NumericError("max_weight_matching: bad edge");
        }
    }
    return BlossomMatcher(n, edges, max_cardinality).solve();
}

std::vector<int> min_weight_perfect_matching_int(
    const std::vector<std::vector<std::int64_t>>& cost) {
    const int n = static_cast<int>(cost.size());
    if (n <= 0 || n % 2 != 0) {
        throw NumericError("min_weight_perfect_matching: n must be even and positive");
    }
    std::int64_t max_cost = 0;
    for (int i = 0; i < n; ++i) {
        if (static_cast<int>(cost[i].size()) != n) {
            throw NumericError("min_weight_perfect_matching: cost matrix not square");
        }
        for (int j = i + 1; j < n; ++j) max_cost = std::max(max_cost, cost[i][j]);
    }
    // Flip to a maximization problem; max-cardinality forces a perfect
    // matching (the graph is complete), so minimizing cost is equivalent.
    std::vector<Edge> edges;
    edges.reserve(static_cast<std::size_t>(n) * (n - 1) / 2);
    for (int i = 0; i < n; ++i) {
        for (int j = i + 1; j < n; ++j) {
            edges.push_back({i, j, max_cost + 1 - cost[i][j]});
        }
    }
    auto mate = max_weight_matching(n, edges, true);
    for (int v = 0; v < n; ++v) {
        if (mate[v] < 0) throw NumericError("min_weight_perfect_matching: matching not perfect");
    }
    return mate;
}

std::vector<int> min_weight_perfect_matching(const std::vector<std::vector<double>>& cost) {
    const int n = static_cast<int>(cost.size());
    double max_cost = 0.0;
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < static_cast<int>(cost[i].size()); ++j) {
            if (i != j) max_cost = std::max(max_cost, std::fabs(cost[i][j]));
        }
    }
    const double scale = max_cost > 0.0 ? std::ldexp(1.0, 40) / max_cost : 1.0;
    std::vector<std::vector<std::int64_t>> scaled(n, std::vector<std::int64_t>(n, 0));
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            if (i != j) scaled[i][j] = std::llround(cost[i][j] * scale);
        }
    }
    return min_weight_perfect_matching_int(scaled);
}

}  // namespace xtrial::matching
