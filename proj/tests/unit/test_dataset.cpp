#include <doctest.h>

#include <fstream>
#include <iterator>
#include <set>
#include <sstream>

#include "remaster/dataset.hpp"
#include "remaster/error.hpp"
#include "remaster/nn/params.hpp"
#include "remaster/wav.hpp"
#include "toy_corpus.hpp"

using namespace remaster;

namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

std::uint64_t file_checksum(const std::filesystem::path& p) {
  const auto bytes = slurp(p);
  return nn::fnv1a(bytes.data(), bytes.size());
}

}  // namespace

TEST_CASE("scan_corpus") {
  const auto dir = testing::scratch_dir("ds_scan");
  SUBCASE("empty directory is an error") {
    try {
      scan_corpus(dir);
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(std::string(e.what()).find("zero usable songs") != std::string::npos);
    }
  }
  SUBCASE("one 30 s file") {
    save_wav(testing::toy_song(1, 30.0), dir / "only.wav");
    const auto m = scan_corpus(dir);
    REQUIRE(m.size() == 1);
    CHECK(m[0].duration == doctest::Approx(30.0).epsilon(0.01 / 30.0));
    CHECK(scan_corpus(dir) == m);
  }
  SUBCASE("non-audio and short files are skipped, order is by path") {
    testing::write_toy_corpus(dir, 3, 1.0, 5);
    std::ofstream(dir / "notes.txt") << "hello";
    const auto m = scan_corpus(dir);
    REQUIRE(m.size() == 3);
    CHECK(m[0].path.filename() == "song_00.wav");
    CHECK(m[2].path.filename() == "song_02.wav");
    CHECK_THROWS(scan_corpus(dir, 2.0));
  }
}

TEST_CASE("manifest save and load round trip") {
  const auto dir = testing::scratch_dir("ds_manifest");
  testing::write_toy_corpus(dir / "c", 2, 1.0, 3);
  const auto m = scan_corpus(dir / "c");
  save_manifest(m, dir / "m.json");
  CHECK(load_manifest(dir / "m.json") == m);
}

TEST_CASE("contrastive pairs respect the length range") {
  const auto song = testing::toy_song(2, 30.0);
  for (int trial = 0; trial < 20; ++trial) {
    Rng rng(static_cast<std::uint64_t>(trial));
    const auto pair = make_contrastive_pair(song, rng);
    for (const auto* s : {&pair.first, &pair.second}) {
      CHECK(s->size() >= 5 * 44100);
      CHECK(s->size() <= 10 * 44100);
    }
    CHECK(pair.offset_first + pair.first.size() <= song.size());
    CHECK(pair.offset_second + pair.second.size() <= song.size());
  }
  Rng a(9), b(9);
  const auto p1 = make_contrastive_pair(song, a);
  const auto p2 = make_contrastive_pair(song, b);
  CHECK(p1.offset_first == p2.offset_first);
  CHECK(p1.offset_second == p2.offset_second);
  CHECK(p1.first.size() == p2.first.size());
  CHECK(p1.second.size() == p2.second.size());
}

TEST_CASE("contrastive pair from a too-short song") {
  const auto song = testing::toy_song(2, 9.0);
  Rng rng(1);
  try {
    make_contrastive_pair(song, rng);
    FAIL("expected an error");
  } catch (const InvalidArgument& e) {
    CHECK(std::string(e.what()).find("song too short") != std::string::npos);
  }
}

TEST_CASE("triplets share m2 and use disjoint slices") {
  const auto song = testing::toy_song(6, 4.0);
  TripletOptions opt;
  opt.segment_len = 32768;
  for (std::uint64_t s = 0; s < 10; ++s) {
    Rng rng(s);
    const auto t = build_triplet("x", song, rng, opt);
    CHECK(t.input_a1.size() == opt.segment_len);
    CHECK(t.target_a2.size() == opt.segment_len);
    CHECK(t.reference_b2.size() == opt.segment_len);
    CHECK_FALSE(t.m1 == t.m2);
    const auto [a, b] = t.segment_offsets;
    CHECK((a + opt.segment_len <= b || b + opt.segment_len <= a));
    // B2 is exactly chain(B, m2)
    CHECK(t.reference_b2 == apply_chain(segment(song, b, opt.segment_len), t.m2));
  }
}

TEST_CASE("identity manipulations make A1 and A2 agree") {
  const auto song = testing::toy_song(6, 3.0);
  TripletOptions opt;
  opt.segment_len = 16384;
  opt.ranges = FxRanges::identity();
  for (auto scope : {ChainScope::segment, ChainScope::song}) {
    opt.scope = scope;
    Rng rng(4);
    const auto t = build_triplet("x", song, rng, opt);
    for (std::size_t i = 0; i < t.input_a1.size(); ++i) {
      REQUIRE(std::abs(t.input_a1.left()[i] - t.target_a2.left()[i]) <= 1e-6);
      REQUIRE(std::abs(t.input_a1.right()[i] - t.target_a2.right()[i]) <= 1e-6);
    }
  }
}

TEST_CASE("build_triplet rejects songs shorter than two segments") {
  const auto song = testing::toy_song(6, 0.5);
  Rng rng(1);
  TripletOptions opt;
  opt.segment_len = 16384;
  CHECK_THROWS_AS(build_triplet("x", song, rng, opt), InvalidArgument);
}

TEST_CASE("fabricate") {
  const auto dir = testing::scratch_dir("ds_fab");
  testing::write_toy_corpus(dir / "corpus", 4, 1.5, 11);
  const auto manifest = scan_corpus(dir / "corpus");
  FabricateOptions opt;
  opt.triplet.segment_len = 8192;

  SUBCASE("count 0 gives an empty index and no audio") {
    const auto recs = fabricate(manifest, 0, 1, dir / "zero", opt);
    CHECK(recs.empty());
    CHECK(slurp(dir / "zero" / kIndexFileName).empty());
    std::size_t wavs = 0;
    for (const auto& e : std::filesystem::directory_iterator(dir / "zero")) wavs += e.path().extension() == ".wav";
    CHECK(wavs == 0);
  }
  SUBCASE("same seed gives identical bytes, independent of threads") {
    opt.threads = 1;
    const auto r1 = fabricate(manifest, 6, 77, dir / "one", opt);
    opt.threads = 3;
    const auto r2 = fabricate(manifest, 6, 77, dir / "two", opt);
    CHECK(slurp(dir / "one" / kIndexFileName) == slurp(dir / "two" / kIndexFileName));
    for (const auto& r : r1) {
      CHECK(file_checksum(dir / "one" / r.a1_path) == file_checksum(dir / "two" / r.a1_path));
      CHECK(file_checksum(dir / "one" / r.b2_path) == file_checksum(dir / "two" / r.b2_path));
    }
    opt.threads = 1;
    fabricate(manifest, 6, 78, dir / "three", opt);
    CHECK(slurp(dir / "one" / kIndexFileName) != slurp(dir / "three" / kIndexFileName));
  }
  SUBCASE("round robin covers the manifest and records parse back") {
    opt.threads = 2;
    const auto recs = fabricate(manifest, 8, 3, dir / "rr", opt);
    std::set<std::string> ids;
    for (const auto& s : manifest) ids.insert(s.song_id);
    const auto back = read_index(dir / "rr" / kIndexFileName);
    REQUIRE(back.size() == 8);
    for (std::size_t i = 0; i < back.size(); ++i) {
      CHECK(ids.contains(back[i].song_id));
      CHECK(back[i].song_id == manifest[i % manifest.size()].song_id);
      CHECK(back[i].m2 == recs[i].m2);
    }
    // rebuilt in memory, triplet 5 equals the file on disk up to float32 storage
    SongLibrary lib(manifest);
    const auto t = fabricate_one(lib, 5, 3, opt);
    const auto a2 = load_wav(dir / "rr" / back[5].a2_path);
    for (std::size_t i = 0; i < a2.size(); ++i)
      REQUIRE(a2.left()[i] == static_cast<double>(static_cast<float>(t.target_a2.left()[i])));
  }
  SUBCASE("uniform sampling only draws manifest songs") {
    opt.sampling = SongSampling::uniform;
    opt.threads = 1;
    const auto recs = fabricate(manifest, 8, 5, dir / "uni", opt);
    std::set<std::string> ids;
    for (const auto& s : manifest) ids.insert(s.song_id);
    for (const auto& r : recs) CHECK(ids.contains(r.song_id));
  }
}
