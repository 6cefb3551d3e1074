#pragma once

// Shared test plumbing: data paths, temp directories, subprocess helpers and
// constructed fixtures with known statistics.

#include <fcntl.h>
#include <signal.h>
#include <spawn.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <array>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "lamp/corpus.hpp"
#include "lamp/evalstats.hpp"
#include "lamp/idiom.hpp"

extern char** environ;

namespace lamp::fixtures {

namespace fs = std::filesystem;

inline fs::path data_dir() { return fs::path(LAMP_TEST_DATA_DIR); }
inline fs::path cli_path() { return fs::path(LAMP_CLI_PATH); }

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag = "lamp") {
    static std::mt19937_64 rng(std::random_device{}());
    path_ = fs::temp_directory_path() / (tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(rng() % 1000000007));
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& name) const { return path_ / name; }

 private:
  fs::path path_;
};

inline std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + p.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const fs::path& p, const std::string& s) {
  std::ofstream out(p, std::ios::binary);
  out << s;
}

struct CommandResult {
  int exit_code = -1;
  std::string output;  // stdout and stderr interleaved
};

inline std::string shell_quote(const std::string& s) {
  std::string out = "'";
  for (char c : s) {
    if (c == '\'') {
      out += "'\\''";
    } else {
      out += c;
    }
  }
  return out + "'";
}

/// Runs the lamp CLI with the given arguments.
inline CommandResult run_cli(const std::vector<std::string>& args) {
  std::string cmd = shell_quote(cli_path().string());
  for (const auto& a : args) cmd += " " + shell_quote(a);
  cmd += " 2>&1";
  CommandResult r;
  FILE* pipe = ::popen(cmd.c_str(), "r");
  if (!pipe) throw std::runtime_error("popen failed");
  std::array<char, 4096> buf{};
  std::size_t n;
  while ((n = std::fread(buf.data(), 1, buf.size(), pipe)) > 0) r.output.append(buf.data(), n);
  int status = ::pclose(pipe);
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

/// A `lamp serve` child process. The port is read back from its first line
/// of output.
class ServerProcess {
 public:
  ServerProcess(const fs::path& config, const fs::path& log_file) {
    std::vector<std::string> args = {cli_path().string(), "serve", "--config", config.string(), "--port", "0"};
    std::vector<char*> argv;
    for (auto& a : args) argv.push_back(a.data());
    argv.push_back(nullptr);
    posix_spawn_file_actions_t fa;
    posix_spawn_file_actions_init(&fa);
    posix_spawn_file_actions_addopen(&fa, 1, log_file.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
    posix_spawn_file_actions_adddup2(&fa, 1, 2);
    if (posix_spawn(&pid_, argv[0], &fa, nullptr, argv.data(), environ) != 0) {
      posix_spawn_file_actions_destroy(&fa);
      throw std::runtime_error("cannot spawn lamp serve");
    }
    posix_spawn_file_actions_destroy(&fa);
    const auto deadline = std::chrono::steady_clock::now() + std::chrono::seconds(20);
    while (std::chrono::steady_clock::now() < deadline) {
      std::string out;
      try {
        out = read_file(log_file);
      } catch (...) {
      }
      auto at = out.find("listening on ");
      if (at != std::string::npos && out.find('\n', at) != std::string::npos) {
        auto colon = out.find(':', at + 13);
        port_ = std::stoi(out.substr(colon + 1));
        return;
      }
      int status = 0;
      if (::waitpid(pid_, &status, WNOHANG) == pid_) {
        pid_ = -1;
        throw std::runtime_error("lamp serve exited early: " + out);
      }
      std::this_thread::sleep_for(std::chrono::milliseconds(20));
    }
    kill_hard();
    throw std::runtime_error("lamp serve did not report a port");
  }

  ~ServerProcess() { kill_hard(); }
  ServerProcess(const ServerProcess&) = delete;
  ServerProcess& operator=(const ServerProcess&) = delete;

  int port() const { return port_; }

  /// SIGKILL: no destructors, no flushing, exactly like a crash.
  void kill_hard() {
    if (pid_ <= 0) return;
    ::kill(pid_, SIGKILL);
    int status = 0;
    ::waitpid(pid_, &status, 0);
    pid_ = -1;
  }

 private:
  pid_t pid_ = -1;
  int port_ = 0;
};

// ---- constructed fixtures ---------------------------------------------------------

/// Ranks (LLMGenerated, WriterEdited, LLM-edited) and how many judgments get
/// them in each half of the 600-judgment fixture.
struct RankPattern {
  int generated, writer, edited;
  int count;
};

/// Per half: 24 x (3,1,2) + 140 x (3,2,1) + 136 x (2,1,3).
/// Means: generated 764/300, writer 440/300, edited 596/300.
inline constexpr std::array<RankPattern, 3> kRankPatterns = {{{3, 1, 2, 24}, {3, 2, 1, 140}, {2, 1, 3, 136}}};

/// 200 triplets x 3 judges. Triplets alternate between the oracle and the
/// full condition; each half carries the same rank multiset.
inline std::vector<evalstats::PreferenceJudgment> ranked_judgments() {
  using evalstats::Condition;
  std::vector<std::array<int, 3>> half;
  for (const auto& p : kRankPatterns) {
    for (int i = 0; i < p.count; ++i) half.push_back({p.generated, p.writer, p.edited});
  }
  std::vector<evalstats::PreferenceJudgment> out;
  std::size_t next[2] = {0, 0};
  for (int t = 0; t < 200; ++t) {
    const int kind = t % 2;  // 0 oracle, 1 full
    const Condition edited = kind == 0 ? Condition::LLMEditedOracle : Condition::LLMEditedFull;
    for (int j = 0; j < 3; ++j) {
      const auto& r = half[next[kind]++];
      evalstats::PreferenceJudgment pj;
      pj.triplet_id = "t" + std::to_string(t);
      pj.judge = "judge" + std::to_string((t + j) % 12);
      pj.condition_of_rank[r[0]] = Condition::LLMGenerated;
      pj.condition_of_rank[r[1]] = Condition::WriterEdited;
      pj.condition_of_rank[r[2]] = edited;
      std::array<Condition, 3> shown = {Condition::LLMGenerated, Condition::WriterEdited, edited};
      std::rotate(shown.begin(), shown.begin() + (t + j) % 3, shown.end());
      pj.display_order.assign(shown.begin(), shown.end());
      out.push_back(std::move(pj));
    }
  }
  return out;
}

/// 10 paragraphs x 10 edits: edits 0..73 replacements, 74..91 deletions,
/// 92..99 insertions (global numbering in paragraph order).
inline std::vector<AnnotatedParagraph> opmix_corpus() {
  std::vector<AnnotatedParagraph> out;
  int global = 0;
  for (int p = 0; p < 10; ++p) {
    AnnotatedParagraph ap;
    ap.record.id = "mix" + std::to_string(p);
    ap.record.genre = Genre::Fiction;
    ap.record.response.clear();
    // Ten 12-character chunks separated by spaces.
    for (int c = 0; c < 10; ++c) {
      if (c) ap.record.response += ' ';
      std::string chunk = "p" + std::to_string(p) + "c" + std::to_string(c);
      chunk.resize(12, 'x');
      ap.record.response += chunk;
    }
    for (int c = 0; c < 10; ++c, ++global) {
      EditSpan e;
      e.start = static_cast<std::size_t>(c) * 13;
      e.end = e.start + 12;
      e.original = ap.record.response.substr(e.start, 12);
      e.category = EditCategory::Kind::AwkwardWordChoiceAndPhrasing;
      e.annotator = "writer";
      e.order_index = c + 1;
      if (global < 74) {
        e.replacement = "changed text";
      } else if (global < 92) {
        e.replacement = "";
        e.category = EditCategory::Kind::UnnecessaryRedundantExposition;
      } else {
        e.replacement = e.original + " and a much longer addition that runs well past forty";
        e.category = EditCategory::Kind::LackOfSpecificityAndDetail;
      }
      ap.edits.push_back(e);
    }
    ap.scores = QualityScores{3 + p % 5, 6 + p % 4, "writer"};
    out.push_back(std::move(ap));
  }
  return out;
}

inline const std::vector<std::string>& synthetic_tags() {
  static const std::vector<std::string> tags = {"DT", "NN", "IN", "JJ", "VB", "PRP", "RB", "CC", "NNS", "VBD"};
  return tags;
}

/// Randomly tagged paragraphs. When `plant` is set, every third paragraph
/// carries "a mix of pride and" (DT NN IN NN CC).
inline std::vector<idiom::TaggedParagraph> synthetic_tagged(std::size_t n, std::uint64_t seed, bool plant) {
  std::mt19937_64 rng(seed);
  const auto& tags = synthetic_tags();
  std::vector<idiom::TaggedParagraph> out;
  for (std::size_t p = 0; p < n; ++p) {
    idiom::TaggedParagraph tp;
    tp.source_id = (plant ? "llm" : "human") + std::to_string(p);
    const std::size_t len = 20 + rng() % 30;
    for (std::size_t i = 0; i < len; ++i) {
      const auto& tag = tags[rng() % tags.size()];
      tp.tokens.push_back({"w" + std::to_string(rng() % 50), tag});
    }
    if (plant && p % 3 == 0) {
      const std::vector<idiom::Token> seq = {{"a", "DT"}, {"mix", "NN"}, {"of", "IN"}, {"pride", "NN"}, {"and", "CC"}};
      const std::size_t at = rng() % (tp.tokens.size() - 1);
      tp.tokens.insert(tp.tokens.begin() + static_cast<std::ptrdiff_t>(at), seq.begin(), seq.end());
    }
    out.push_back(std::move(tp));
  }
  return out;
}

inline std::string to_tsv(const std::vector<idiom::TaggedParagraph>& corpus) {
  std::string out;
  for (const auto& p : corpus) {
    out += "# id: " + p.source_id + "\n";
    for (const auto& t : p.tokens) out += t.surface + "\t" + t.tag + "\n";
    out += "\n";
  }
  return out;
}

}  // namespace lamp::fixtures
