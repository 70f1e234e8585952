#include "lsa/emb_io.hpp"

#include "lsa/byte_io.hpp"
#include "lsa/error.hpp"

#include <algorithm>
#include <string>

namespace lsa {

namespace {

constexpr std::string_view kMagic = "EMB1";

void put_values(ByteWriter& w, std::span<const double> v, Precision p)
{
    for (double x : v) {
        if (p == Precision::F32)
            w.f32(static_cast<float>(x));
        else
            w.f64(x);
    }
}

void get_values(ByteReader& r, std::span<double> v, Precision p)
{
    for (double& x : v)
        x = p == Precision::F32 ? static_cast<double>(r.f32()) : r.f64();
}

} // namespace

void validate(const EmbDataset& ds)
{
    if (ds.labels.size() != ds.globals.size())
        throw Error(ErrorCode::DimensionMismatch, "label count differs from sample count");
    for (const auto& g : ds.globals)
        if (g.size() != ds.dim)
            throw Error(ErrorCode::DimensionMismatch, "global embedding of dimension " +
                                                          std::to_string(g.size()) + ", expected " +
                                                          std::to_string(ds.dim));
    if (ds.locals_per_sample == 0) {
        if (!ds.locals.empty())
            throw Error(ErrorCode::DimensionMismatch, "locals present but locals_per_sample is 0");
        return;
    }
    if (ds.locals.size() != ds.globals.size())
        throw Error(ErrorCode::DimensionMismatch, "locals missing for some samples");
    for (const auto& ls : ds.locals) {
        if (ls.size() != ds.locals_per_sample)
            throw Error(ErrorCode::DimensionMismatch, "sample has " + std::to_string(ls.size()) +
                                                          " locals, expected " +
                                                          std::to_string(ds.locals_per_sample));
        for (const auto& l : ls)
            if (l.size() != ds.dim)
                throw Error(ErrorCode::DimensionMismatch, "local embedding dimension differs");
    }
}

std::vector<char> encode_emb(const EmbDataset& ds)
{
    validate(ds);
    ByteWriter w;
    w.bytes(kMagic);
    w.uint(kEmbVersion);
    w.uint(static_cast<std::uint32_t>(ds.dim));
    w.uint(static_cast<std::uint64_t>(ds.size()));
    w.uint(static_cast<std::uint8_t>(ds.precision));
    w.uint(static_cast<std::uint32_t>(ds.locals_per_sample));
    for (std::size_t i = 0; i < ds.size(); ++i) {
        w.i32(ds.labels[i]);
        put_values(w, ds.globals[i], ds.precision);
        if (ds.locals_per_sample > 0)
            for (const auto& l : ds.locals[i])
                put_values(w, l, ds.precision);
    }
    return w.buffer();
}

EmbDataset decode_emb(std::span<const char> bytes)
{
    ByteReader r(bytes);
    if (r.remaining() < kMagic.size() || r.bytes(kMagic.size()) != kMagic)
        throw Error(ErrorCode::BadMagic, "not an EMB1 file", 0);
    const auto version = r.uint<std::uint16_t>();
    if (version != kEmbVersion)
        throw Error(ErrorCode::BadMagic, "unsupported EMB1 version " + std::to_string(version), 4);
    EmbDataset ds;
    ds.dim = r.uint<std::uint32_t>();
    const auto count = r.uint<std::uint64_t>();
    const auto precision_offset = r.offset();
    const auto precision = r.uint<std::uint8_t>();
    if (precision != 4 && precision != 8)
        throw Error(ErrorCode::BadMagic, "precision flag " + std::to_string(precision),
                    precision_offset);
    ds.precision = static_cast<Precision>(precision);
    ds.locals_per_sample = r.uint<std::uint32_t>();
    if (ds.dim == 0)
        throw Error(ErrorCode::DimensionMismatch, "zero embedding dimension");

    const std::uint64_t record =
        4 + static_cast<std::uint64_t>(ds.dim) * (1 + ds.locals_per_sample) * precision;
    const std::uint64_t fits = r.remaining() / record;
    const auto reserve = static_cast<std::size_t>(std::min<std::uint64_t>(count, fits));
    ds.labels.reserve(reserve);
    ds.globals.reserve(reserve);
    for (std::uint64_t i = 0; i < count; ++i) {
        ds.labels.push_back(r.i32());
        Vector g(ds.dim);
        get_values(r, g, ds.precision);
        ds.globals.push_back(std::move(g));
        if (ds.locals_per_sample > 0) {
            std::vector<Vector> ls(ds.locals_per_sample, Vector(ds.dim));
            for (auto& l : ls)
                get_values(r, l, ds.precision);
            ds.locals.push_back(std::move(ls));
        }
    }
    if (r.remaining() != 0)
        throw Error(ErrorCode::DimensionMismatch,
                    "payload holds " + std::to_string(r.remaining()) +
                        " bytes beyond the declared count",
                    r.offset());
    return ds;
}

void write_emb(const std::filesystem::path& path, const EmbDataset& ds)
{
    write_file_bytes(path, encode_emb(ds));
}

EmbDataset read_emb(const std::filesystem::path& path)
{
    return decode_emb(read_file_bytes(path));
}

} // namespace lsa
