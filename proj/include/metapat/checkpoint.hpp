#pragma once

#include <array>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <cstdio>
#include <map>
#include <span>
#include <type_traits>
#include <string>
#include <vector>

#include "metapat/error.hpp"
#include "metapat/mcmc.hpp"

namespace metapat {

/// Binary chain snapshot: an 8-byte magic followed by tagged sections
/// (4-byte tag, u64 payload length, payload). Unknown tags are skipped on
/// read, so later versions may append sections.
namespace checkpoint {

inline constexpr std::array<char, 8> kMagic = {'M', 'P', 'C', 'K', 'P', 'T', '\0', '\1'};
inline constexpr std::uint32_t kFormatVersion = 1;

class Buffer {
public:
    template <class T>
    void put(const T& v) {
        static_assert(std::is_trivially_copyable_v<T>);
        const auto* p = reinterpret_cast<const char*>(&v);
        bytes_.insert(bytes_.end(), p, p + sizeof(T));
    }
    template <class T>
    void put_vec(const std::vector<T>& v) {
        put<std::uint64_t>(v.size());
        for (const T& x : v) put(x);
    }
    template <class T>
    void put_span(std::span<const T> v) {
        put<std::uint64_t>(v.size());
        for (const T& x : v) put(x);
    }
    void put_str(const std::string& s) {
        put<std::uint64_t>(s.size());
        bytes_.insert(bytes_.end(), s.begin(), s.end());
    }
    const std::vector<char>& bytes() const { return bytes_; }

private:
    std::vector<char> bytes_;
};

class Reader {
public:
    Reader(const std::vector<char>& bytes, std::string section) : bytes_(bytes), section_(std::move(section)) {}

    template <class T>
    T get() {
        static_assert(std::is_trivially_copyable_v<T>);
        need(sizeof(T));
        T v;
        std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
        pos_ += sizeof(T);
        return v;
    }
    template <class T>
    std::vector<T> get_vec() {
        const auto n = get<std::uint64_t>();
        need(n * sizeof(T));
        std::vector<T> v(n);
        for (auto& x : v) x = get<T>();
        return v;
    }
    template <class T>
    void get_into(std::span<T> out) {
        const auto n = get<std::uint64_t>();
        if (n != out.size()) throw FormatError("checkpoint: section " + section_ + " has wrong length");
        for (auto& x : out) x = get<T>();
    }
    std::string get_str() {
        const auto n = get<std::uint64_t>();
        need(n);
        std::string s(bytes_.data() + pos_, n);
        pos_ += n;
        return s;
    }

private:
    void need(std::size_t n) const {
        if (pos_ + n > bytes_.size()) throw FormatError("checkpoint: truncated section " + section_);
    }
    const std::vector<char>& bytes_;
    std::string section_;
    std::size_t pos_ = 0;
};

struct Snapshot {
    ChainState state;
    PosteriorAccumulator acc;
    std::uint64_t seed = 0;
};

inline void write(const std::string& path, const ChainState& st, const PosteriorAccumulator& acc,
                  const McmcConfig& cfg) {
    std::map<std::string, Buffer> sections;

    auto& head = sections["HEAD"];
    head.put<std::uint32_t>(kFormatVersion);
    head.put<std::uint64_t>(st.genes);
    head.put<std::uint64_t>(st.studies);
    head.put<std::uint64_t>(st.iteration);
    head.put<std::uint64_t>(cfg.seed);

    auto& chain = sections["CHAN"];
    chain.put_span<int>(st.labels.flat());
    chain.put_vec(st.pi);
    chain.put_vec(st.delta);
    chain.put(st.gamma);

    auto& dp = sections["DPTB"];
    for (std::size_t s = 0; s < st.studies; ++s) {
        for (const DpSide* side : {&st.positive[s], &st.negative[s]}) {
            dp.put<double>(side->alpha());
            dp.put<double>(side->sigma0_sq());
            dp.put<std::uint64_t>(side->size());
            for (const auto& c : side->components()) {
                dp.put<std::uint64_t>(c.count);
                dp.put<double>(c.sum_z);
            }
        }
    }

    auto& rngs = sections["RNGS"];
    rngs.put_str(st.global_rng.serialize());
    rngs.put<std::uint64_t>(st.study_rng.size());
    for (const auto& r : st.study_rng) rngs.put_str(r.serialize());

    auto& a = sections["ACCU"];
    a.put<std::uint64_t>(acc.n_samples);
    a.put<std::uint64_t>(acc.gamma_accepted);
    a.put_span<std::uint32_t>(acc.count_pos.flat());
    a.put_span<std::uint32_t>(acc.count_neg.flat());
    a.put_span<std::uint32_t>(acc.count_null.flat());
    a.put_span<std::uint32_t>(acc.de_count_hist.flat());
    a.put_vec(acc.trace_gamma);
    a.put_vec(acc.trace_mean_pi);

    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw FormatError("cannot write checkpoint '" + tmp + "'");
        out.write(kMagic.data(), kMagic.size());
        for (const auto& [tag, buf] : sections) {
            out.write(tag.data(), 4);
            const std::uint64_t len = buf.bytes().size();
            out.write(reinterpret_cast<const char*>(&len), sizeof len);
            out.write(buf.bytes().data(), static_cast<std::streamsize>(len));
        }
        if (!out) throw FormatError("error writing checkpoint '" + tmp + "'");
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0) throw FormatError("cannot move checkpoint to '" + path + "'");
}

inline Snapshot read(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open checkpoint '" + path + "'");
    std::array<char, 8> magic{};
    in.read(magic.data(), magic.size());
    if (!in || magic != kMagic) throw FormatError("'" + path + "' is not a metapat checkpoint");

    std::map<std::string, std::vector<char>> sections;
    for (;;) {
        char tag[4];
        in.read(tag, 4);
        if (in.gcount() == 0) break;
        std::uint64_t len = 0;
        in.read(reinterpret_cast<char*>(&len), sizeof len);
        if (!in) throw FormatError("checkpoint: truncated section header");
        std::vector<char> payload(len);
        in.read(payload.data(), static_cast<std::streamsize>(len));
        if (!in) throw FormatError("checkpoint: truncated section payload");
        sections.emplace(std::string(tag, 4), std::move(payload));
    }
    for (const char* need : {"HEAD", "CHAN", "DPTB", "RNGS", "ACCU"})
        if (!sections.count(need)) throw FormatError(std::string("checkpoint: missing section ") + need);

    Snapshot snap;
    ChainState& st = snap.state;
    Reader head(sections["HEAD"], "HEAD");
    if (head.get<std::uint32_t>() != kFormatVersion) throw FormatError("checkpoint: unsupported version");
    st.genes = head.get<std::uint64_t>();
    st.studies = head.get<std::uint64_t>();
    st.iteration = head.get<std::uint64_t>();
    snap.seed = head.get<std::uint64_t>();

    Reader chain(sections["CHAN"], "CHAN");
    st.labels = Matrix<int>(st.genes, st.studies);
    chain.get_into<int>(st.labels.flat());
    st.pi = chain.get_vec<double>();
    st.delta = chain.get_vec<double>();
    st.gamma = chain.get<double>();

    Reader dp(sections["DPTB"], "DPTB");
    for (std::size_t s = 0; s < st.studies; ++s) {
        for (Side side : {Side::positive, Side::negative}) {
            const double alpha = dp.get<double>();
            const double sigma0_sq = dp.get<double>();
            const auto n = dp.get<std::uint64_t>();
            std::vector<Component> comps(n);
            for (auto& c : comps) {
                c.count = dp.get<std::uint64_t>();
                c.sum_z = dp.get<double>();
            }
            DpSide d(side, alpha, sigma0_sq);
            d.set_components(std::move(comps));
            (side == Side::positive ? st.positive : st.negative).push_back(std::move(d));
        }
    }

    Reader rngs(sections["RNGS"], "RNGS");
    st.global_rng.deserialize(rngs.get_str());
    const auto n_rng = rngs.get<std::uint64_t>();
    st.study_rng.resize(n_rng);
    for (auto& r : st.study_rng) r.deserialize(rngs.get_str());

    Reader a(sections["ACCU"], "ACCU");
    snap.acc = PosteriorAccumulator(st.genes, st.studies);
    snap.acc.n_samples = a.get<std::uint64_t>();
    snap.acc.gamma_accepted = a.get<std::uint64_t>();
    a.get_into<std::uint32_t>(snap.acc.count_pos.flat());
    a.get_into<std::uint32_t>(snap.acc.count_neg.flat());
    a.get_into<std::uint32_t>(snap.acc.count_null.flat());
    a.get_into<std::uint32_t>(snap.acc.de_count_hist.flat());
    snap.acc.trace_gamma = a.get_vec<double>();
    snap.acc.trace_mean_pi = a.get_vec<double>();
    return snap;
}

} // namespace checkpoint
} // namespace metapat
