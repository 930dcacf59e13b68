#include "ablate/ssc.hpp"

#include <algorithm>
#include <cmath>

#include "ablate/error.hpp"

namespace ablate {

const SscPairTable& sscPairs() {
    static const SscPairTable table = [] {
        SscPairTable t{};
        const int offs[6][3] = {{-1, 0, 0}, {1, 0, 0},  {0, -1, 0},
                                {0, 1, 0},  {0, 0, -1}, {0, 0, 1}};
        for (int i = 0; i < 6; ++i)
            for (int a = 0; a < 3; ++a) t.offsets[i][a] = offs[i][a];
        int c = 0;
        for (int a = 0; a < 6; ++a)
            for (int b = a + 1; b < 6; ++b) {
                const int dot = offs[a][0] * offs[b][0] + offs[a][1] * offs[b][1] +
                                offs[a][2] * offs[b][2];
                if (dot != 0) continue; // skip the 3 collinear pairs
                t.pair_a[c] = a;
                t.pair_b[c] = b;
                ++c;
            }
        return t;
    }();
    return table;
}

namespace {

inline int clampi(int v, int lo, int hi) { return v < lo ? lo : (v > hi ? hi : v); }

inline float clampedRead(const Volume& v, int i, int j, int k) {
    const auto& d = v.meta.dims;
    return v.voxels[size_t(
        v.meta.index(clampi(i, 0, d.x - 1), clampi(j, 0, d.y - 1), clampi(k, 0, d.z - 1)))];
}

// mean squared patch distance between patches at x+na and x+nb, clamped reads
double patchDistance(const Volume& vol, int i, int j, int k, const int* na, const int* nb,
                     int r) {
    double sum = 0;
    int n = 0;
    for (int ok = -r; ok <= r; ++ok)
        for (int oj = -r; oj <= r; ++oj)
            for (int oi = -r; oi <= r; ++oi) {
                const double va = clampedRead(vol, i + na[0] + oi, j + na[1] + oj, k + na[2] + ok);
                const double vb = clampedRead(vol, i + nb[0] + oi, j + nb[1] + oj, k + nb[2] + ok);
                sum += (va - vb) * (va - vb);
                ++n;
            }
    return sum / n;
}

void distancesToChannels(const double d[12], float out[12]) {
    double sigma2 = 0;
    for (int c = 0; c < 12; ++c) sigma2 += d[c];
    sigma2 /= 12.0;
    if (sigma2 < 1e-6) sigma2 = 1e-6;
    double mx = 0;
    double ch[12];
    for (int c = 0; c < 12; ++c) {
        ch[c] = std::exp(-d[c] / sigma2);
        mx = std::max(mx, ch[c]);
    }
    for (int c = 0; c < 12; ++c) out[c] = float(ch[c] / mx);
}

// 1-D sliding box sum with replicated borders over a strided line
void boxLine(const float* in, float* out, int n, std::int64_t stride, int r) {
    for (int i = 0; i < n; ++i) {
        double s = 0;
        for (int o = -r; o <= r; ++o) s += in[std::int64_t(clampi(i + o, 0, n - 1)) * stride];
        out[std::int64_t(i) * stride] = float(s);
    }
}

} // namespace

void sscAtVoxel(const Volume& vol, int i, int j, int k, int patch_radius, float out[12]) {
    const auto& t = sscPairs();
    double d[12];
    for (int c = 0; c < 12; ++c)
        d[c] = patchDistance(vol, i, j, k, t.offsets[t.pair_a[c]], t.offsets[t.pair_b[c]],
                             patch_radius);
    distancesToChannels(d, out);
}

SscVolume computeSsc(const Volume& vol, int patch_radius) {
    if (patch_radius < 1) throw ValidationError("ssc: patch_radius must be >= 1");
    const auto& t = sscPairs();
    const auto& dm = vol.meta.dims;
    const int r = patch_radius;
    const std::int64_t total = vol.meta.voxelCount();

    SscVolume desc;
    desc.meta = vol.meta;
    desc.data.assign(static_cast<std::size_t>(total) * SscVolume::kChannels, 0.0f);

    // per-pair box-filtered squared differences; dist[c] holds d_c per voxel
    std::vector<float> w(static_cast<std::size_t>(total)), buf(static_cast<std::size_t>(total));
    std::vector<std::vector<float>> dist(12, std::vector<float>(static_cast<std::size_t>(total)));
    const double inv_patch = 1.0 / double((2 * r + 1) * (2 * r + 1) * (2 * r + 1));

    for (int c = 0; c < 12; ++c) {
        const int* na = t.offsets[t.pair_a[c]];
        const int* nb = t.offsets[t.pair_b[c]];
        const int e[3] = {nb[0] - na[0], nb[1] - na[1], nb[2] - na[2]};
        for (int k = 0; k < dm.z; ++k)
            for (int j = 0; j < dm.y; ++j)
                for (int i = 0; i < dm.x; ++i) {
                    const double v0 = vol.voxels[size_t(vol.meta.index(i, j, k))];
                    const double v1 = clampedRead(vol, i + e[0], j + e[1], k + e[2]);
                    w[size_t(vol.meta.index(i, j, k))] = float((v0 - v1) * (v0 - v1));
                }
        // separable box sums: x, then y, then z
        for (int k = 0; k < dm.z; ++k)
            for (int j = 0; j < dm.y; ++j)
                boxLine(w.data() + vol.meta.index(0, j, k), buf.data() + vol.meta.index(0, j, k),
                        dm.x, 1, r);
        for (int k = 0; k < dm.z; ++k)
            for (int i = 0; i < dm.x; ++i)
                boxLine(buf.data() + vol.meta.index(i, 0, k), w.data() + vol.meta.index(i, 0, k),
                        dm.y, dm.x, r);
        for (int j = 0; j < dm.y; ++j)
            for (int i = 0; i < dm.x; ++i)
                boxLine(w.data() + vol.meta.index(i, j, 0),
                        dist[size_t(c)].data() + vol.meta.index(i, j, 0), dm.z,
                        std::int64_t(dm.x) * dm.y, r);
        // dist[c][y] now holds the patch sum at y; the distance for voxel x
        // is the sum at x + na scaled by 1/|patch| (valid in the interior)
    }

    for (int k = 0; k < dm.z; ++k)
        for (int j = 0; j < dm.y; ++j)
            for (int i = 0; i < dm.x; ++i) {
                const std::int64_t vox = vol.meta.index(i, j, k);
                const bool interior = i >= r + 1 && i <= dm.x - 2 - r && j >= r + 1 &&
                                      j <= dm.y - 2 - r && k >= r + 1 && k <= dm.z - 2 - r;
                if (!interior) {
                    sscAtVoxel(vol, i, j, k, r, desc.at(vox));
                    continue;
                }
                double d[12];
                for (int c = 0; c < 12; ++c) {
                    const int* na = t.offsets[t.pair_a[c]];
                    d[c] = double(dist[size_t(c)][size_t(
                               vol.meta.index(i + na[0], j + na[1], k + na[2]))]) *
                           inv_patch;
                }
                distancesToChannels(d, desc.at(vox));
            }
    return desc;
}

} // namespace ablate
