#include "cmg/corpus.hpp"
#include "cmg/errors.hpp"
#include "cmg/random.hpp"

#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>

using namespace cmg;
namespace fs = std::filesystem;

namespace {

const std::string kSha = std::string(40, 'a');

fs::path fresh_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

int sh(const std::string& cmd) { return std::system(cmd.c_str()); }

// Three linear commits; the first one is a root commit.
fs::path make_fixture_repo() {
  const auto dir = fresh_dir("cmg_git_fixture");
  const std::string git =
      "cd '" + dir.string() +
      "' && GIT_AUTHOR_NAME=t GIT_AUTHOR_EMAIL=t@t GIT_COMMITTER_NAME=t GIT_COMMITTER_EMAIL=t@t "
      "GIT_AUTHOR_DATE='2020-01-01T00:00:00' GIT_COMMITTER_DATE='2020-01-01T00:00:00' git ";
  REQUIRE(sh(git + "init -q -b main >/dev/null 2>&1 || " + git + "init -q >/dev/null") == 0);
  write_text(dir / "A.java", "class A {}\n");
  REQUIRE(sh(git + "add A.java && " + git + "commit -q -m 'Initial import'") == 0);
  write_text(dir / "A.java", "class A { int x; }\n");
  REQUIRE(sh(git + "commit -q -am 'Add field x'") == 0);
  write_text(dir / "A.java", "class A { int y; }\n");
  REQUIRE(sh(git + "commit -q -am 'Rename x to y' -m 'Body line.'") == 0);
  return dir;
}

RawCommit commit(std::string repo, int parents, std::size_t diff_bytes) {
  return RawCommit{std::move(repo), kSha, "fix bug", std::string(diff_bytes, 'x'), parents};
}

}  // namespace

TEST_CASE("sha validation") {
  CHECK(is_valid_sha(kSha));
  CHECK_FALSE(is_valid_sha(std::string(40, 'A')));
  CHECK_FALSE(is_valid_sha(std::string(39, 'a')));
  CHECK_FALSE(is_valid_sha(std::string(40, 'g')));
}

TEST_CASE("filter_commit reasons") {
  const CommitFilterConfig cfg;
  CHECK(filter_commit(commit("r", 2, 10), cfg) == FilterReason::merge);
  CHECK(filter_commit(commit("r", 0, 10), cfg) == FilterReason::initial);
  CHECK(filter_commit(commit("r", 1, 10), cfg) == FilterReason::keep);
  CHECK(filter_commit(commit("r", 1, 1048576), cfg) == FilterReason::keep);
  CHECK(filter_commit(commit("r", 1, 1048577), cfg) == FilterReason::oversize);
  CHECK(to_string(FilterReason::oversize) == "oversize");

  CommitFilterConfig lax;
  lax.drop_merges = false;
  CHECK(filter_commit(commit("r", 2, 10), lax) == FilterReason::keep);
}

TEST_CASE("filtering is idempotent and caps each repository") {
  std::vector<RawCommit> all;
  Rng rng(3);
  for (int i = 0; i < 200; ++i) {
    all.push_back(commit(i % 2 ? "a" : "b", static_cast<int>(uniform_below(rng, 3)),
                         static_cast<std::size_t>(uniform_below(rng, 40))));
  }
  CommitFilterConfig cfg;
  cfg.max_diff_bytes = 30;
  cfg.per_repo_cap = 60;
  const auto once = filter_commits(all, cfg);
  const auto twice = filter_commits(once.kept, cfg);
  CHECK(twice.kept == once.kept);
  CHECK(twice.dropped.empty());
  std::size_t dropped = 0;
  for (const auto& [reason, n] : once.dropped) dropped += n;
  CHECK(once.kept.size() + dropped == 120);

  const auto capped = apply_repo_cap(all, 5);
  CHECK(capped.size() == 10);
  CHECK(capped[0].repo == "b");
  CHECK(capped[1].repo == "a");
}

TEST_CASE("JSONL records") {
  const auto dir = fresh_dir("cmg_jsonl_test");
  const auto empty = dir / "empty.jsonl";
  write_text(empty, "");
  CHECK(read_corpus(empty, CorpusFormat::jsonl).commits.empty());

  const auto one = dir / "one.jsonl";
  write_text(one, "{\"sha\":\"" + kSha +
                      "\",\"message\":\"fix bug\",\"diff\":\"...\",\"parent_count\":1}\n");
  const auto r = read_corpus(one, CorpusFormat::jsonl);
  REQUIRE(r.commits.size() == 1);
  CHECK(r.commits[0].message == "fix bug");
  CHECK(r.commits[0].parent_count == 1);
  CHECK(r.commits[0].repo.empty());
  CHECK(commit_from_json(to_json_line(r.commits[0])) == r.commits[0]);

  const auto mixed = dir / "mixed.jsonl";
  write_text(mixed, "{\"sha\":\"" + kSha +
                        "\",\"message\":\"ok\",\"diff\":\"d\",\"parent_count\":1}\n"
                        "{not json\n"
                        "{\"sha\":\"xyz\",\"message\":\"m\",\"diff\":\"d\",\"parent_count\":1}\n"
                        "{\"sha\":\"" + kSha + "\",\"message\":\"caf\xe9\",\"diff\":\"d\",\"parent_count\":1}\n"
                        "{\"sha\":\"" + kSha + "\",\"message\":\"m\",\"diff\":\"d\",\"parent_count\":-1}\n");
  const auto m = read_corpus(mixed, CorpusFormat::jsonl);
  REQUIRE(m.commits.size() == 2);
  CHECK(m.commits[1].message == "caf\xef\xbf\xbd");
  REQUIRE(m.errors.size() == 3);
  CHECK(m.errors[0].line == 2);
  CHECK(m.errors[1].line == 3);
  CHECK(m.errors[2].line == 5);

  CHECK_THROWS_AS(read_corpus(dir / "missing.jsonl", CorpusFormat::jsonl), IoError);
}

TEST_CASE("git repository ingestion") {
  const auto repo = make_fixture_repo();
  const auto r = read_corpus(repo, CorpusFormat::git_repo);
  CHECK(r.errors.empty());
  REQUIRE(r.commits.size() == 3);
  CHECK(r.commits[0].message == "Rename x to y\n\nBody line.");
  CHECK(r.commits[0].parent_count == 1);
  CHECK(r.commits[2].parent_count == 0);
  CHECK(r.commits[0].diff.find("+class A { int y; }") != std::string::npos);
  CHECK(r.commits[0].diff.rfind("diff --git a/A.java b/A.java", 0) == 0);
  for (const auto& c : r.commits) CHECK(is_valid_sha(c.sha));

  const auto kept = filter_commits(r.commits, CommitFilterConfig{});
  CHECK(kept.kept.size() == 2);
  CHECK(kept.dropped.at("initial") == 1);

  CHECK(read_corpus(repo, CorpusFormat::git_repo, 2).commits.size() == 2);
  CHECK_THROWS_AS(read_corpus(fresh_dir("cmg_not_a_repo"), CorpusFormat::git_repo), IoError);
}

TEST_CASE("split sizes follow the ratios") {
  SplitSpec spec;
  spec.seed = 7;
  const auto s = sample_and_split(36000, spec);
  CHECK(s.train.size() == 28800);
  CHECK(s.valid.size() == 3600);
  CHECK(s.test.size() == 3600);

  spec.sample_size = 10;
  const auto small = sample_and_split(10, spec);
  CHECK(small.train.size() == 8);
  CHECK(small.valid.size() == 1);
  CHECK(small.test.size() == 1);

  spec.sample_size = 11;
  const auto odd = sample_and_split(20, spec);
  CHECK(odd.train.size() == 9);
  CHECK(odd.valid.size() == 1);
  CHECK(odd.test.size() == 1);

  CHECK_THROWS_AS(sample_and_split(5, spec), DomainError);
  spec.ratios = {0.5, 0.1, 0.1};
  CHECK_THROWS_AS(sample_and_split(100, spec), DomainError);
  spec.ratios = {0.8, 0.1, 0.1};
  spec.sample_size = 9;
  CHECK_THROWS_AS(sample_and_split(100, spec), DomainError);
}

TEST_CASE("split is deterministic, disjoint and complete") {
  SplitSpec spec;
  spec.sample_size = 1000;
  spec.seed = 11;
  const auto a = sample_and_split(1000, spec);
  const auto b = sample_and_split(1000, spec);
  CHECK(a.train == b.train);
  CHECK(a.valid == b.valid);
  CHECK(a.test == b.test);

  Rng rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    spec.seed = rng();
    spec.sample_size = 10 + uniform_below(rng, 300);
    const std::size_t n = spec.sample_size + uniform_below(rng, 300);
    const auto s = sample_and_split(n, spec);
    std::set<std::size_t> all;
    for (const auto* part : {&s.train, &s.valid, &s.test}) {
      for (auto i : *part) {
        CHECK(i < n);
        all.insert(i);
      }
    }
    CHECK(all.size() == spec.sample_size);
    CHECK(s.train.size() + s.valid.size() + s.test.size() == spec.sample_size);
  }
  spec.seed = 1;
  const auto c = sample_and_split(1000, SplitSpec{500, {0.8, 0.1, 0.1}, 1});
  const auto d = sample_and_split(1000, SplitSpec{500, {0.8, 0.1, 0.1}, 2});
  CHECK(c.test != d.test);
}

TEST_CASE("corpus statistics") {
  const auto empty = corpus_stats({});
  CHECK(empty.count == 0);
  CHECK(empty.source_hist.empty());
  CHECK(stats_to_json(empty) ==
        "{\"count\":0,\"source_hist\":{},\"target_hist\":{},\"vocab_estimate\":0}");

  const std::vector<ProcessedExample> two{
      {{"a", "b", "c", "d", "e"}, {"fix", "a"}, "x"},
      {{"a", "b", "c", "d", "f"}, {"fix"}, "y"},
  };
  const auto s = corpus_stats(two);
  CHECK(s.count == 2);
  CHECK(s.source_hist == std::map<std::size_t, std::size_t>{{5, 2}});
  CHECK(s.target_hist == std::map<std::size_t, std::size_t>{{1, 1}, {2, 1}});
  CHECK(s.vocab_estimate == 7);
  CHECK(stats_to_json(s) ==
        "{\"count\":2,\"source_hist\":{\"5\":2},\"target_hist\":{\"1\":1,\"2\":1},"
        "\"vocab_estimate\":7}");
}
