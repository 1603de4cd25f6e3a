#include "ded/dataset_io.hpp"

#include "ded/binary_io.hpp"
#include "ded/errors.hpp"

#include <cmath>
#include <fstream>

namespace ded::data {

namespace {
constexpr const char* kMagic = "DEDDATA\n";
}

void write_dataset(std::ostream& out, const Dataset& dataset) {
  BinaryWriter w(out);
  w.put_bytes(kMagic, 8);
  w.put<std::uint32_t>(kDatasetVersion);
  w.put_string(dataset.id);
  w.put<double>(dataset.dt);
  w.put<std::int32_t>(dataset.hist_len);
  w.put<std::int32_t>(dataset.fut_len);
  w.put<std::uint64_t>(dataset.scenes.size());
  for (const auto& scene : dataset.scenes) {
    w.put<std::uint8_t>(static_cast<std::uint8_t>(scene.split));
    w.put<double>(scene.scene_origin.x);
    w.put<double>(scene.scene_origin.y);
    w.put<std::uint64_t>(scene.windows.size());
    for (std::size_t a = 0; a < scene.windows.size(); ++a) {
      const auto& win = scene.windows[a];
      if (static_cast<int>(win.history.size()) != dataset.hist_len ||
          static_cast<int>(win.future.size()) != dataset.fut_len) {
        throw DataError("window length does not match dataset header");
      }
      w.put<std::int64_t>(win.agent_id);
      w.put<std::int64_t>(win.end_frame);
      w.put<double>(win.end_time);
      w.put<double>(win.origin.x);
      w.put<double>(win.origin.y);
      for (const auto& f : win.history) w.put_doubles(f.data(), f.size());
      for (const auto& p : win.future) {
        w.put<double>(p.x);
        w.put<double>(p.y);
      }
      const auto& mask = scene.presence.at(a);
      for (bool m : mask) w.put<std::uint8_t>(m ? 1 : 0);
    }
  }
  if (!out) throw DataError("dataset write failed");
}

Dataset read_dataset(std::istream& in) {
  BinaryReader r(in);
  r.expect_magic(kMagic);
  const auto version = r.get<std::uint32_t>();
  if (version != kDatasetVersion) {
    throw DataError("unsupported dataset version " + std::to_string(version));
  }
  Dataset d;
  d.id = r.get_string(4096);
  d.dt = r.get<double>();
  d.hist_len = r.get<std::int32_t>();
  d.fut_len = r.get<std::int32_t>();
  if (d.hist_len < 2 || d.fut_len < 1 || d.hist_len > 10000 || d.fut_len > 10000) {
    throw DataError("dataset header has invalid window lengths");
  }
  const auto n_scenes = r.get<std::uint64_t>();
  if (n_scenes > (1ull << 32)) throw DataError("scene count out of range");
  d.scenes.reserve(n_scenes);
  for (std::uint64_t s = 0; s < n_scenes; ++s) {
    Scene scene;
    const auto tag = r.get<std::uint8_t>();
    if (tag > 3) throw DataError("bad split tag");
    scene.split = static_cast<SplitTag>(tag);
    scene.scene_origin.x = r.get<double>();
    scene.scene_origin.y = r.get<double>();
    const auto n_windows = r.get<std::uint64_t>();
    if (n_windows == 0 || n_windows > (1ull << 24)) throw DataError("scene window count out of range");
    for (std::uint64_t a = 0; a < n_windows; ++a) {
      TrajectoryWindow win;
      win.agent_id = r.get<std::int64_t>();
      win.end_frame = r.get<std::int64_t>();
      win.end_time = r.get<double>();
      win.origin.x = r.get<double>();
      win.origin.y = r.get<double>();
      win.history.resize(static_cast<std::size_t>(d.hist_len));
      for (auto& f : win.history) r.get_doubles(f.data(), f.size());
      win.future.resize(static_cast<std::size_t>(d.fut_len));
      for (auto& p : win.future) {
        p.x = r.get<double>();
        p.y = r.get<double>();
      }
      std::vector<bool> mask(static_cast<std::size_t>(d.hist_len));
      for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = r.get<std::uint8_t>() != 0;
      scene.windows.push_back(std::move(win));
      scene.presence.push_back(std::move(mask));
    }
    d.scenes.push_back(std::move(scene));
  }
  return d;
}

void save_dataset(const std::filesystem::path& path, const Dataset& dataset) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  write_dataset(out, dataset);
}

Dataset load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  return read_dataset(in);
}

}  // namespace ded::data
