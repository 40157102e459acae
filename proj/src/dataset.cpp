#include "putf/dataset.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

#include "putf/error.hpp"
#include "putf/geometry.hpp"
#include "putf/io.hpp"
#include "putf/rng.hpp"

namespace putf {

namespace fs = std::filesystem;

namespace {

std::string shape_name(const SurfaceRef& s) {
    switch (s.kind) {
        case SurfaceRef::Kind::Sphere: return "sphere";
        case SurfaceRef::Kind::Torus: return "torus";
        case SurfaceRef::Kind::Cylinder: return "cylinder";
        case SurfaceRef::Kind::Bump: return "bump";
        case SurfaceRef::Kind::Mesh: return "mesh";
    }
    return "shape";
}

}  // namespace

std::vector<SampleRecord> generate_dataset(const std::vector<SurfaceRef>& shapes, std::size_t n_in,
                                           std::size_t r, std::size_t count, std::uint64_t seed) {
    if (shapes.empty()) throw ArgumentError("generate_dataset: no shapes");
    if (count == 0) throw ArgumentError("generate_dataset: count must be >= 1");
    if (n_in == 0 || r == 0) throw ArgumentError("generate_dataset: n_in and r must be positive");
    for (const auto& s : shapes) s.validate();

    const std::size_t n_dense = n_in * r;
    const std::size_t n_pool = 20 * n_dense;
    const Rng base(seed);

    std::vector<SampleRecord> samples(count);
    for (std::size_t i = 0; i < count; ++i) {
        const SurfaceRef& surf = shapes[i % shapes.size()];
        Rng rng = base.fork(i);
        PointCloud pool;
        pool.pts.resize(n_pool);
        for (auto& p : pool.pts) p = surf.sample(rng);

        SampleRecord& rec = samples[i];
        rec.surface = surf;
        char idbuf[32];
        std::snprintf(idbuf, sizeof(idbuf), "_%04zu", i);
        rec.id = shape_name(surf) + idbuf;

        rec.dense.pts.reserve(n_dense);
        for (auto j : fps(pool, n_dense)) rec.dense.pts.push_back(pool[j]);
        rec.sparse.pts.reserve(n_in);
        for (auto j : fps(rec.dense, n_in)) rec.sparse.pts.push_back(rec.dense[j]);
    }
    return samples;
}

void save_dataset(const std::vector<SampleRecord>& samples, const std::string& dir) {
    fs::create_directories(dir);
    std::ofstream manifest(fs::path(dir) / "manifest.txt", std::ios::binary);
    if (!manifest) throw IoError("cannot write manifest in " + dir);
    for (const auto& rec : samples) {
        const std::string sparse_file = rec.id + "_sparse.xyz";
        const std::string dense_file = rec.id + "_dense.xyz";
        write_xyz(rec.sparse, (fs::path(dir) / sparse_file).string());
        write_xyz(rec.dense, (fs::path(dir) / dense_file).string());
        manifest << rec.id << ' ' << sparse_file << ' ' << dense_file << ' '
                 << rec.surface.spec_string() << '\n';
    }
    if (!manifest) throw IoError("manifest write failed in " + dir);
}

std::vector<SampleRecord> load_dataset(const std::string& dir) {
    const fs::path manifest_path = fs::path(dir) / "manifest.txt";
    std::ifstream in(manifest_path);
    if (!in) throw IoError("cannot open: " + manifest_path.string());
    std::vector<SampleRecord> samples;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ss(line);
        std::string id, sparse_file, dense_file, spec;
        if (!(ss >> id >> sparse_file >> dense_file >> spec))
            throw ParseError("manifest: expected '<id> <sparse> <dense> <surface>'", line_no);
        SampleRecord rec;
        rec.id = id;
        rec.sparse = read_xyz((fs::path(dir) / sparse_file).string());
        rec.dense = read_xyz((fs::path(dir) / dense_file).string());
        rec.surface = SurfaceRef::parse(spec);
        samples.push_back(std::move(rec));
    }
    if (samples.empty()) throw ParseError("manifest: no samples in " + manifest_path.string(), line_no);
    return samples;
}

}  // namespace putf
