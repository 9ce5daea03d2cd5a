#include "rim/mask.hpp"

#include <algorithm>

#include "rim/common.hpp"

namespace rim {

AttentionMask build_mask(const SequenceLayout& layout, const MaskConfig& config) {
    const int n = layout.size();
    check(n > 0, "build_mask: empty layout");

    // memory block indices must be 1..n_blocks with no gaps
    std::vector<char> seen(static_cast<size_t>(layout.n_blocks) + 1, 0);
    for (int i = 0; i < n; ++i) {
        if (layout.kind[i] != SegmentKind::memory) continue;
        int k = layout.seg_index[i];
        check(k >= 1 && k <= layout.n_blocks, "build_mask: block index out of range");
        seen[static_cast<size_t>(k)] = 1;
    }
    for (int k = 1; k <= layout.n_blocks; ++k) {
        check(seen[static_cast<size_t>(k)], "build_mask: memory blocks not contiguous from 1");
    }

    AttentionMask mask(n);
    for (int q = 0; q < n; ++q) {
        switch (layout.kind[q]) {
            case SegmentKind::question:
                for (int k = 0; k <= q; ++k) {
                    if (layout.kind[k] == SegmentKind::question) mask.set(q, k, true);
                }
                break;
            case SegmentKind::memory: {
                const int block = layout.seg_index[q];
                for (int k = 0; k < n; ++k) {
                    if (layout.kind[k] == SegmentKind::question) {
                        mask.set(q, k, true);
                    } else if (layout.kind[k] == SegmentKind::memory) {
                        int kb = layout.seg_index[k];
                        if (kb < block) mask.set(q, k, true);
                        if (kb == block && (config.block_bidirectional || k <= q)) {
                            mask.set(q, k, true);
                        }
                    }
                }
                break;
            }
            case SegmentKind::readout: {
                const int branch = layout.seg_index[q];
                for (int k = 0; k < n; ++k) {
                    if (layout.kind[k] == SegmentKind::question) {
                        if (config.readout_sees_question) mask.set(q, k, true);
                    } else if (layout.kind[k] == SegmentKind::memory) {
                        if (layout.seg_index[k] <= branch) mask.set(q, k, true);
                    } else if (layout.seg_index[k] == branch && k <= q) {
                        mask.set(q, k, true);
                    }
                }
                break;
            }
        }
        mask.set(q, q, true);  // a token always sees itself
    }
    return mask;
}

void validate_mask(const AttentionMask& mask, const SequenceLayout& layout,
                   const MaskConfig& config) {
    const int n = layout.size();
    check(mask.size() == n, "validate_mask: size mismatch");

    auto rule = [&](int q, int k) -> bool {
        if (q == k) return true;
        const SegmentKind qk = layout.kind[q];
        const SegmentKind kk = layout.kind[k];
        const int qi = layout.seg_index[q];
        const int ki = layout.seg_index[k];
        if (qk == SegmentKind::question) {
            return kk == SegmentKind::question && k < q;
        }
        if (qk == SegmentKind::memory) {
            if (kk == SegmentKind::question) return true;
            if (kk != SegmentKind::memory) return false;
            if (ki < qi) return true;
            if (ki > qi) return false;
            return config.block_bidirectional || k < q;
        }
        // readout
        if (kk == SegmentKind::question) return config.readout_sees_question;
        if (kk == SegmentKind::memory) return ki <= qi;
        return ki == qi && k < q;
    };

    for (int q = 0; q < n; ++q) {
        for (int k = 0; k < n; ++k) {
            bool want = rule(q, k);
            if (mask.at(q, k) != want) {
                fail("validate_mask: query " + std::to_string(q) + " key " + std::to_string(k) +
                     (want ? " should be allowed but is masked"
                           : " should be masked but is allowed"));
            }
        }
    }
}

AttentionMask reachability_closure(const AttentionMask& mask) {
    const int n = mask.size();
    const int words = (n + 63) / 64;
    std::vector<uint64_t> rows(static_cast<size_t>(n) * words, 0);
    auto row = [&](int q) { return rows.data() + static_cast<size_t>(q) * words; };
    for (int q = 0; q < n; ++q) {
        for (int k = 0; k < n; ++k) {
            if (mask.at(q, k)) row(q)[k / 64] |= 1ull << (k % 64);
        }
        row(q)[q / 64] |= 1ull << (q % 64);
    }
    // Warshall over bitset rows
    for (int k = 0; k < n; ++k) {
        const uint64_t* rk = row(k);
        for (int q = 0; q < n; ++q) {
            if (row(q)[k / 64] & (1ull << (k % 64))) {
                uint64_t* rq = row(q);
                for (int w = 0; w < words; ++w) rq[w] |= rk[w];
            }
        }
    }
    AttentionMask out(n);
    for (int q = 0; q < n; ++q) {
        for (int k = 0; k < n; ++k) {
            if (row(q)[k / 64] & (1ull << (k % 64))) out.set(q, k, true);
        }
    }
    return out;
}

void check_no_branch_leakage(const AttentionMask& closure, const SequenceLayout& layout) {
    const int n = layout.size();
    check(closure.size() == n, "check_no_branch_leakage: size mismatch");
    for (int q = 0; q < n; ++q) {
        for (int k = 0; k < n; ++k) {
            if (layout.kind[k] != SegmentKind::readout) continue;
            bool own_branch = layout.kind[q] == SegmentKind::readout &&
                              layout.seg_index[q] == layout.seg_index[k];
            if (closure.at(q, k) && !own_branch) {
                fail("branch leakage: slot " + std::to_string(q) + " can reach readout slot " +
                     std::to_string(k) + " of branch " + std::to_string(layout.seg_index[k]));
            }
        }
    }
}

std::string mask_to_text(const AttentionMask& mask) {
    std::string out;
    out.reserve(static_cast<size_t>(mask.size()) * (mask.size() + 1));
    for (int q = 0; q < mask.size(); ++q) {
        for (int k = 0; k < mask.size(); ++k) out.push_back(mask.at(q, k) ? 'x' : '.');
        out.push_back('\n');
    }
    return out;
}

std::vector<uint8_t> decode_key_allow(const SequenceLayout& stream_layout, int n_stream,
                                      int block, int n_branch_before,
                                      const MaskConfig& config) {
    check(n_stream <= stream_layout.size(), "decode_key_allow: stream length out of range");
    std::vector<uint8_t> allow(static_cast<size_t>(n_stream + n_branch_before + 1), 0);
    for (int k = 0; k < n_stream; ++k) {
        if (stream_layout.kind[k] == SegmentKind::question) {
            allow[static_cast<size_t>(k)] = config.readout_sees_question ? 1 : 0;
        } else if (stream_layout.kind[k] == SegmentKind::memory) {
            allow[static_cast<size_t>(k)] = stream_layout.seg_index[k] <= block ? 1 : 0;
        }
    }
    for (int i = 0; i <= n_branch_before; ++i) {
        allow[static_cast<size_t>(n_stream + i)] = 1;  // own branch + self
    }
    return allow;
}

}  // namespace rim
