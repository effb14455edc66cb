#include <cstring>
#include <fstream>
#include <sstream>

#include "tabsight/agent.hpp"

namespace tabsight {

namespace {

constexpr char kMagic[4] = {'T', 'S', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;

class Writer {
public:
    explicit Writer(std::ostream& out) : out_(out) {}
    template <class T>
    void pod(const T& v) {
        out_.write(reinterpret_cast<const char*>(&v), sizeof(T));
    }
    void str(const std::string& s) {
        pod(static_cast<std::uint64_t>(s.size()));
        out_.write(s.data(), static_cast<std::streamsize>(s.size()));
    }
    void params(const nn::ParamSet& ps) {
        pod(static_cast<std::uint32_t>(ps.size()));
        for (int i = 0; i < ps.size(); ++i) {
            const nn::Param& p = ps.at(i);
            str(p.name);
            pod(static_cast<std::int32_t>(p.value.rows()));
            pod(static_cast<std::int32_t>(p.value.cols()));
            out_.write(reinterpret_cast<const char*>(p.value.data().data()),
                       static_cast<std::streamsize>(p.value.size() * sizeof(double)));
        }
    }

private:
    std::ostream& out_;
};

class Reader {
public:
    Reader(std::istream& in, std::string path) : in_(in), path_(std::move(path)) {}
    template <class T>
    T pod() {
        T v{};
        in_.read(reinterpret_cast<char*>(&v), sizeof(T));
        if (!in_) fail("truncated");
        return v;
    }
    std::string str() {
        const auto n = pod<std::uint64_t>();
        if (n > (1ULL << 30)) fail("implausible string length");
        std::string s(n, '\0');
        in_.read(s.data(), static_cast<std::streamsize>(n));
        if (!in_) fail("truncated");
        return s;
    }
    void params(nn::ParamSet& ps) {
        const auto n = pod<std::uint32_t>();
        if (static_cast<int>(n) != ps.size()) fail("parameter count mismatch");
        for (int i = 0; i < ps.size(); ++i) {
            nn::Param& p = ps.at(i);
            const std::string name = str();
            const auto rows = pod<std::int32_t>();
            const auto cols = pod<std::int32_t>();
            if (name != p.name || rows != p.value.rows() || cols != p.value.cols()) fail("parameter layout mismatch at " + name);
            in_.read(reinterpret_cast<char*>(p.value.data().data()), static_cast<std::streamsize>(p.value.size() * sizeof(double)));
            if (!in_) fail("truncated");
        }
    }
    [[noreturn]] void fail(const std::string& why) { throw Error(ErrorCode::io, "bad checkpoint " + path_ + ": " + why); }

private:
    std::istream& in_;
    std::string path_;
};

}  // namespace

void save_checkpoint(const TrainResult& r, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorCode::io, "cannot write " + path);
    Writer w(out);
    out.write(kMagic, 4);
    w.pod(kVersion);
    w.str(nlohmann::json(r.config).dump());
    std::ostringstream rng;
    rng << r.rng;
    w.str(rng.str());
    w.pod(static_cast<std::int64_t>(r.steps));
    w.params(r.policy.params);
    w.params(r.curiosity.targets);
    w.params(r.curiosity.predictors);
    for (const RunningStd* s : {&r.curiosity.statsH, &r.curiosity.statsD}) {
        w.pod(s->count);
        w.pod(s->mean);
        w.pod(s->m2);
    }
    if (!out) throw Error(ErrorCode::io, "failed writing " + path);
}

TrainResult load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::io, "cannot read " + path);
    Reader rd(in, path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kMagic, 4) != 0) rd.fail("wrong magic");
    const auto version = rd.pod<std::uint32_t>();
    if (version != kVersion) rd.fail("unsupported version " + std::to_string(version));

    TrainResult r;
    r.config = nlohmann::json::parse(rd.str()).get<TrainConfig>();
    std::istringstream rng(rd.str());
    rng >> r.rng;
    r.steps = rd.pod<std::int64_t>();
    r.policy = PolicyNet(r.config.encoder, r.config.trunkHidden, derive_seed(r.config.seed, 1));
    r.curiosity = Curiosity(r.config.encoder, r.config.rndOutDim, r.config.rndLearningRate, derive_seed(r.config.seed, 2));
    rd.params(r.policy.params);
    rd.params(r.curiosity.targets);
    rd.params(r.curiosity.predictors);
    for (RunningStd* s : {&r.curiosity.statsH, &r.curiosity.statsD}) {
        s->count = rd.pod<double>();
        s->mean = rd.pod<double>();
        s->m2 = rd.pod<double>();
    }
    return r;
}

}  // namespace tabsight
