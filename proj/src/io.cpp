#include "ablate/io.hpp"

#include <zlib.h>

#include <cmath>
#include <cstring>
#include <fstream>
#include <nlohmann/json.hpp>

namespace ablate {

namespace {

using json = nlohmann::json;

static_assert(sizeof(float) == 4);

bool endsWith(const std::string& s, const std::string& suffix) {
    return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

// ---------------------------------------------------------------- NIfTI-1

#pragma pack(push, 1)
struct NiftiHeader {
    std::int32_t sizeof_hdr;
    char data_type[10];
    char db_name[18];
    std::int32_t extents;
    std::int16_t session_error;
    char regular;
    char dim_info;
    std::int16_t dim[8];
    float intent_p1, intent_p2, intent_p3;
    std::int16_t intent_code;
    std::int16_t datatype;
    std::int16_t bitpix;
    std::int16_t slice_start;
    float pixdim[8];
    float vox_offset;
    float scl_slope;
    float scl_inter;
    std::int16_t slice_end;
    char slice_code;
    char xyzt_units;
    float cal_max, cal_min;
    float slice_duration;
    float toffset;
    std::int32_t glmax, glmin;
    char descrip[80];
    char aux_file[24];
    std::int16_t qform_code;
    std::int16_t sform_code;
    float quatern_b, quatern_c, quatern_d;
    float qoffset_x, qoffset_y, qoffset_z;
    float srow_x[4], srow_y[4], srow_z[4];
    char intent_name[16];
    char magic[4];
};
#pragma pack(pop)
static_assert(sizeof(NiftiHeader) == 348);

constexpr std::int16_t kDtUint8 = 2;
constexpr std::int16_t kDtInt16 = 4;
constexpr std::int16_t kDtFloat32 = 16;

// gzread handles plain (uncompressed) files transparently.
std::vector<char> readWholeFile(const std::string& path) {
    gzFile f = gzopen(path.c_str(), "rb");
    if (!f) throw ValidationError("cannot open file: " + path);
    std::vector<char> out;
    char buf[1 << 16];
    int n;
    while ((n = gzread(f, buf, sizeof buf)) > 0) out.insert(out.end(), buf, buf + n);
    const bool bad = n < 0;
    gzclose(f);
    if (bad) throw ValidationError("cannot read file (corrupt gzip?): " + path);
    return out;
}

void writeWholeFile(const std::string& path, const void* data, size_t size, bool gzipped) {
    if (gzipped) {
        gzFile f = gzopen(path.c_str(), "wb6");
        if (!f) throw Error("cannot open file for writing: " + path);
        const char* p = static_cast<const char*>(data);
        size_t left = size;
        while (left > 0) {
            const unsigned chunk = unsigned(std::min<size_t>(left, 1u << 24));
            if (gzwrite(f, p, chunk) != int(chunk)) {
                gzclose(f);
                throw Error("write failure: " + path);
            }
            p += chunk;
            left -= chunk;
        }
        if (gzclose(f) != Z_OK) throw Error("write failure: " + path);
    } else {
        std::ofstream f(path, std::ios::binary | std::ios::trunc);
        if (!f) throw Error("cannot open file for writing: " + path);
        f.write(static_cast<const char*>(data), std::streamsize(size));
        if (!f) throw Error("write failure: " + path);
    }
}

GridMeta gridFromHeader(const NiftiHeader& h, const std::string& path) {
    GridMeta meta;
    meta.dims = {int(h.dim[1]), int(h.dim[2]), int(h.dim[3])};

    const double tol = 1e-4;
    if (h.sform_code > 0) {
        const float* rows[3] = {h.srow_x, h.srow_y, h.srow_z};
        for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 3; ++c) {
                const double v = rows[r][c];
                if (r == c) {
                    if (v <= 0)
                        throw ValidationError(
                            "unsupported orientation (flipped or degenerate axis) in " + path);
                    meta.spacing[r] = v;
                } else if (std::abs(v) > tol) {
                    throw ValidationError("unsupported oblique orientation in " + path);
                }
            }
        meta.origin = {rows[0][3], rows[1][3], rows[2][3]};
    } else if (h.qform_code > 0) {
        if (std::abs(h.quatern_b) > tol || std::abs(h.quatern_c) > tol ||
            std::abs(h.quatern_d) > tol)
            throw ValidationError("unsupported oblique orientation (qform rotation) in " + path);
        if (h.pixdim[0] < 0)
            throw ValidationError("unsupported orientation (negative qfac) in " + path);
        meta.spacing = {h.pixdim[1], h.pixdim[2], h.pixdim[3]};
        meta.origin = {h.qoffset_x, h.qoffset_y, h.qoffset_z};
    } else {
        meta.spacing = {h.pixdim[1] > 0 ? h.pixdim[1] : 1.0, h.pixdim[2] > 0 ? h.pixdim[2] : 1.0,
                        h.pixdim[3] > 0 ? h.pixdim[3] : 1.0};
        meta.origin = {0, 0, 0};
    }
    meta.validate();
    return meta;
}

Volume loadNifti(const std::string& path) {
    const std::vector<char> bytes = readWholeFile(path);
    if (bytes.size() < sizeof(NiftiHeader))
        throw ValidationError("file too small for a NIfTI-1 header: " + path);
    NiftiHeader h;
    std::memcpy(&h, bytes.data(), sizeof h);

    if (h.sizeof_hdr != 348)
        throw ValidationError("not a little-endian NIfTI-1 file: " + path);
    if (std::strncmp(h.magic, "n+1", 3) != 0)
        throw ValidationError("only single-file NIfTI-1 (magic n+1) is supported: " + path);
    if (h.dim[0] < 3)
        throw ValidationError("expected a 3D volume: " + path);
    for (int d = 4; d <= h.dim[0] && d < 8; ++d)
        if (h.dim[d] > 1) throw ValidationError("4D+ volumes are not supported: " + path);
    if (h.dim[1] < 1 || h.dim[2] < 1 || h.dim[3] < 1)
        throw ValidationError("invalid dimensions in header: " + path);

    const GridMeta meta = gridFromHeader(h, path);
    const std::int64_t n = meta.voxelCount();

    size_t elem;
    switch (h.datatype) {
        case kDtUint8: elem = 1; break;
        case kDtInt16: elem = 2; break;
        case kDtFloat32: elem = 4; break;
        default:
            throw ValidationError("unsupported NIfTI datatype " + std::to_string(h.datatype) +
                                  " in " + path);
    }

    const size_t offset = size_t(std::max(h.vox_offset, 348.0f));
    if (bytes.size() < offset + size_t(n) * elem)
        throw ValidationError("payload size mismatch in " + path);
    const char* data = bytes.data() + offset;

    std::vector<float> voxels(static_cast<std::size_t>(n));
    switch (h.datatype) {
        case kDtUint8:
            for (std::int64_t i = 0; i < n; ++i)
                voxels[size_t(i)] = float(std::uint8_t(data[i]));
            break;
        case kDtInt16: {
            std::vector<std::int16_t> raw(static_cast<std::size_t>(n));
            std::memcpy(raw.data(), data, size_t(n) * 2);
            for (std::int64_t i = 0; i < n; ++i) voxels[size_t(i)] = float(raw[size_t(i)]);
            break;
        }
        case kDtFloat32:
            std::memcpy(voxels.data(), data, size_t(n) * 4);
            break;
    }

    if (h.scl_slope != 0.0f && (h.scl_slope != 1.0f || h.scl_inter != 0.0f))
        for (auto& v : voxels) v = v * h.scl_slope + h.scl_inter;

    return Volume(meta, Unit::HU, std::move(voxels));
}

NiftiHeader makeHeader(const GridMeta& meta, std::int16_t datatype, std::int16_t bitpix) {
    NiftiHeader h;
    std::memset(&h, 0, sizeof h);
    h.sizeof_hdr = 348;
    h.regular = 'r';
    h.dim[0] = 3;
    h.dim[1] = std::int16_t(meta.dims.x);
    h.dim[2] = std::int16_t(meta.dims.y);
    h.dim[3] = std::int16_t(meta.dims.z);
    for (int d = 4; d < 8; ++d) h.dim[d] = 1;
    h.datatype = datatype;
    h.bitpix = bitpix;
    h.pixdim[0] = 1.0f;
    h.pixdim[1] = float(meta.spacing.x);
    h.pixdim[2] = float(meta.spacing.y);
    h.pixdim[3] = float(meta.spacing.z);
    h.vox_offset = 352.0f;
    h.scl_slope = 1.0f;
    h.scl_inter = 0.0f;
    h.xyzt_units = 2; // mm
    std::strncpy(h.descrip, "ablate-eval", sizeof h.descrip - 1);
    h.sform_code = 1;
    h.srow_x[0] = float(meta.spacing.x);
    h.srow_x[3] = float(meta.origin.x);
    h.srow_y[1] = float(meta.spacing.y);
    h.srow_y[3] = float(meta.origin.y);
    h.srow_z[2] = float(meta.spacing.z);
    h.srow_z[3] = float(meta.origin.z);
    h.qform_code = 0;
    std::memcpy(h.magic, "n+1", 4);
    return h;
}

void saveNifti(const GridMeta& meta, const void* payload, size_t payload_size,
               std::int16_t datatype, std::int16_t bitpix, const std::string& path) {
    if (meta.dims.x > 32767 || meta.dims.y > 32767 || meta.dims.z > 32767)
        throw ValidationError("dims exceed NIfTI-1 int16 limit");
    const NiftiHeader h = makeHeader(meta, datatype, bitpix);
    std::vector<char> bytes(352 + payload_size, 0);
    std::memcpy(bytes.data(), &h, sizeof h);
    // bytes 348..351: extension flag, all zero (no extensions)
    std::memcpy(bytes.data() + 352, payload, payload_size);
    writeWholeFile(path, bytes.data(), bytes.size(), endsWith(path, ".gz"));
}

// ---------------------------------------------------------- raw + sidecar

std::string sidecarPath(const std::string& raw_path) {
    return raw_path.substr(0, raw_path.size() - 4) + ".json";
}

json readSidecar(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ValidationError("cannot open sidecar: " + path);
    json j;
    try {
        f >> j;
    } catch (const json::exception& e) {
        throw ValidationError("invalid sidecar JSON " + path + ": " + e.what());
    }
    return j;
}

GridMeta gridFromSidecar(const json& j, const std::string& path) {
    GridMeta meta;
    try {
        const auto& d = j.at("dims");
        const auto& s = j.at("spacing");
        meta.dims = {d.at(0).get<int>(), d.at(1).get<int>(), d.at(2).get<int>()};
        meta.spacing = {s.at(0).get<double>(), s.at(1).get<double>(), s.at(2).get<double>()};
        if (j.contains("origin")) {
            const auto& o = j.at("origin");
            meta.origin = {o.at(0).get<double>(), o.at(1).get<double>(), o.at(2).get<double>()};
        }
    } catch (const json::exception& e) {
        throw ValidationError("invalid sidecar " + path + ": " + e.what());
    }
    meta.validate();
    return meta;
}

json sidecarFromGrid(const GridMeta& meta) {
    return json{{"dims", {meta.dims.x, meta.dims.y, meta.dims.z}},
                {"spacing", {meta.spacing.x, meta.spacing.y, meta.spacing.z}},
                {"origin", {meta.origin.x, meta.origin.y, meta.origin.z}}};
}

Volume loadRaw(const std::string& path) {
    const json j = readSidecar(sidecarPath(path));
    const GridMeta meta = gridFromSidecar(j, path);
    const Unit unit = j.value("unit", "HU") == std::string("normalized") ? Unit::Normalized
                                                                         : Unit::HU;
    const std::vector<char> bytes = readWholeFile(path);
    const std::int64_t n = meta.voxelCount();
    if (std::int64_t(bytes.size()) != n * 4)
        throw ValidationError("payload size mismatch in " + path);
    std::vector<float> voxels(static_cast<std::size_t>(n));
    std::memcpy(voxels.data(), bytes.data(), size_t(n) * 4);
    return Volume(meta, unit, std::move(voxels));
}

void saveRaw(const Volume& vol, const std::string& path) {
    writeWholeFile(path, vol.voxels.data(), vol.voxels.size() * 4, false);
    json j = sidecarFromGrid(vol.meta);
    j["unit"] = unitName(vol.unit);
    std::ofstream f(sidecarPath(path));
    if (!f) throw Error("cannot open file for writing: " + sidecarPath(path));
    f << j.dump(2) << "\n";
    if (!f) throw Error("write failure: " + sidecarPath(path));
}

} // namespace

Volume loadVolume(const std::string& path) {
    if (endsWith(path, ".nii") || endsWith(path, ".nii.gz")) return loadNifti(path);
    if (endsWith(path, ".raw")) return loadRaw(path);
    throw ValidationError("unsupported volume format (expect .nii, .nii.gz or .raw): " + path);
}

void saveVolume(const Volume& vol, const std::string& path) {
    if (endsWith(path, ".nii") || endsWith(path, ".nii.gz")) {
        saveNifti(vol.meta, vol.voxels.data(), vol.voxels.size() * 4, kDtFloat32, 32, path);
    } else if (endsWith(path, ".raw")) {
        saveRaw(vol, path);
    } else {
        throw ValidationError("unsupported volume format (expect .nii, .nii.gz or .raw): " + path);
    }
}

Mask loadMask(const std::string& path) {
    const Volume vol = loadVolume(path);
    std::vector<std::uint8_t> bin(vol.voxels.size());
    for (size_t i = 0; i < bin.size(); ++i) bin[i] = vol.voxels[i] != 0.0f ? 1 : 0;
    return Mask(vol.meta, std::move(bin));
}

void saveMask(const Mask& mask, const std::string& path) {
    if (endsWith(path, ".nii") || endsWith(path, ".nii.gz")) {
        saveNifti(mask.meta, mask.voxels.data(), mask.voxels.size(), kDtUint8, 8, path);
    } else if (endsWith(path, ".raw")) {
        Volume tmp(mask.meta, Unit::Normalized,
                   std::vector<float>(mask.voxels.begin(), mask.voxels.end()));
        saveRaw(tmp, path);
    } else {
        throw ValidationError("unsupported mask format (expect .nii, .nii.gz or .raw): " + path);
    }
}

DisplacementField loadField(const std::string& path) {
    if (!endsWith(path, ".raw"))
        throw ValidationError("displacement fields use the raw+sidecar format: " + path);
    const json j = readSidecar(sidecarPath(path));
    const GridMeta meta = gridFromSidecar(j, path);
    if (j.value("components", 3) != 3 || j.value("units", "mm") != std::string("mm"))
        throw ValidationError("field sidecar must declare components=3, units=mm: " + path);
    const std::vector<char> bytes = readWholeFile(path);
    const std::int64_t n = meta.voxelCount() * 3;
    if (std::int64_t(bytes.size()) != n * 4)
        throw ValidationError("payload size mismatch in " + path);
    std::vector<float> vec(static_cast<std::size_t>(n));
    std::memcpy(vec.data(), bytes.data(), size_t(n) * 4);
    return DisplacementField(meta, std::move(vec));
}

void saveField(const DisplacementField& field, const std::string& path) {
    if (!endsWith(path, ".raw"))
        throw ValidationError("displacement fields use the raw+sidecar format: " + path);
    writeWholeFile(path, field.vectors.data(), field.vectors.size() * 4, false);
    json j = sidecarFromGrid(field.meta);
    j["units"] = "mm";
    j["components"] = 3;
    std::ofstream f(sidecarPath(path));
    if (!f) throw Error("cannot open file for writing: " + sidecarPath(path));
    f << j.dump(2) << "\n";
    if (!f) throw Error("write failure: " + sidecarPath(path));
}

std::string fileContentHash(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw ValidationError("cannot open file: " + path);
    std::uint64_t h = 1469598103934665603ull;
    char buf[1 << 16];
    while (f) {
        f.read(buf, sizeof buf);
        for (std::streamsize i = 0; i < f.gcount(); ++i) {
            h ^= std::uint8_t(buf[i]);
            h *= 1099511628211ull;
        }
    }
    char out[17];
    std::snprintf(out, sizeof out, "%016llx", static_cast<unsigned long long>(h));
    return out;
}

} // namespace ablate
