#pragma once

// Domain types shared by every stage: segmented sentences, vocabularies,
// parallel pairs with replayable edit scripts, and unit-level alignments.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace textmend {

struct BadUtf8 : std::runtime_error {
  explicit BadUtf8(std::size_t byte_offset)
      : std::runtime_error("invalid UTF-8 at byte " + std::to_string(byte_offset)) {}
};

namespace utf8 {

// Decodes the code point starting at `pos`; advances `pos` past it.
inline char32_t decode(std::string_view s, std::size_t& pos) {
  const auto byte = [&](std::size_t i) { return static_cast<unsigned char>(s[i]); };
  const unsigned char b0 = byte(pos);
  auto trail = [&](std::size_t i) {
    if (i >= s.size() || (byte(i) & 0xc0u) != 0x80u) throw BadUtf8(pos);
    return static_cast<char32_t>(byte(i) & 0x3fu);
  };
  if (b0 < 0x80u) {
    return static_cast<char32_t>(s[pos++]);
  }
  if ((b0 & 0xe0u) == 0xc0u) {
    char32_t cp = (static_cast<char32_t>(b0 & 0x1fu) << 6) | trail(pos + 1);
    if (cp < 0x80) throw BadUtf8(pos);
    pos += 2;
    return cp;
  }
  if ((b0 & 0xf0u) == 0xe0u) {
    char32_t cp = (static_cast<char32_t>(b0 & 0x0fu) << 12) | (trail(pos + 1) << 6) | trail(pos + 2);
    if (cp < 0x800 || (cp >= 0xd800 && cp <= 0xdfff)) throw BadUtf8(pos);
    pos += 3;
    return cp;
  }
  if ((b0 & 0xf8u) == 0xf0u) {
    char32_t cp = (static_cast<char32_t>(b0 & 0x07u) << 18) | (trail(pos + 1) << 12) |
                  (trail(pos + 2) << 6) | trail(pos + 3);
    if (cp < 0x10000 || cp > 0x10ffff) throw BadUtf8(pos);
    pos += 4;
    return cp;
  }
  throw BadUtf8(pos);
}

inline void append(std::string& out, char32_t cp) {
  if (cp < 0x80) {
    out.push_back(static_cast<char>(cp));
  } else if (cp < 0x800) {
    out.push_back(static_cast<char>(0xc0 | (cp >> 6)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3f)));
  } else if (cp < 0x10000) {
    out.push_back(static_cast<char>(0xe0 | (cp >> 12)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3f)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3f)));
  } else {
    out.push_back(static_cast<char>(0xf0 | (cp >> 18)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3f)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3f)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3f)));
  }
}

inline std::vector<char32_t> decode_all(std::string_view s) {
  std::vector<char32_t> cps;
  std::size_t pos = 0;
  while (pos < s.size()) cps.push_back(decode(s, pos));
  return cps;
}

inline std::string encode(std::span<const char32_t> cps) {
  std::string out;
  for (char32_t cp : cps) append(out, cp);
  return out;
}

inline std::size_t length(std::string_view s) { return decode_all(s).size(); }

}  // namespace utf8

inline bool is_space_cp(char32_t cp) {
  return cp == U' ' || cp == U'\t' || cp == U'\r' || cp == U'\n' || cp == 0x3000;
}

inline bool is_ascii_punct_cp(char32_t cp) {
  return (cp >= 0x21 && cp <= 0x2f) || (cp >= 0x3a && cp <= 0x40) || (cp >= 0x5b && cp <= 0x60) ||
         (cp >= 0x7b && cp <= 0x7e);
}

enum class SegmentMode { CjkChar, LatinWord };

inline std::string_view to_string(SegmentMode mode) {
  return mode == SegmentMode::CjkChar ? "cjk-char" : "latin-word";
}

inline SegmentMode segment_mode_from(std::string_view name) {
  if (name == "cjk-char") return SegmentMode::CjkChar;
  if (name == "latin-word") return SegmentMode::LatinWord;
  throw std::invalid_argument("unknown segment mode: " + std::string(name));
}

// A segmented sentence. Gaps hold the original separators so that
// gap[0] + unit[0] + gap[1] + ... + unit[n-1] + gap[n] == raw, which is the
// reconstruction invariant checked by the tests.
class Sentence {
 public:
  Sentence() : mode_(SegmentMode::CjkChar) { gaps_.emplace_back(); }

  static Sentence segment(std::string_view text, SegmentMode mode) {
    Sentence s;
    s.mode_ = mode;
    s.raw_.assign(text);
    s.gaps_.clear();
    std::string gap;
    std::string unit;
    auto flush_unit = [&] {
      if (unit.empty()) return;
      s.gaps_.push_back(gap);
      gap.clear();
      s.units_.push_back(unit);
      unit.clear();
    };
    std::size_t pos = 0;
    while (pos < text.size()) {
      const std::size_t start = pos;
      const char32_t cp = utf8::decode(text, pos);
      const std::string_view bytes = text.substr(start, pos - start);
      if (is_space_cp(cp)) {
        flush_unit();
        gap.append(bytes);
        continue;
      }
      if (mode == SegmentMode::CjkChar) {
        flush_unit();
        unit.assign(bytes);
        flush_unit();
      } else {
        if (is_ascii_punct_cp(cp)) {
          flush_unit();
          unit.assign(bytes);
          flush_unit();
        } else {
          unit.append(bytes);
        }
      }
    }
    flush_unit();
    s.gaps_.push_back(gap);
    return s;
  }

  // Builds a sentence by joining units with the mode's canonical separator
  // and re-segmenting, so multi-character replacement spans split into
  // ordinary units on read.
  static Sentence from_units(std::span<const std::string> units, SegmentMode mode) {
    std::string joined;
    const char* sep = mode == SegmentMode::LatinWord ? " " : "";
    for (std::size_t i = 0; i < units.size(); ++i) {
      if (i) joined += sep;
      joined += units[i];
    }
    return segment(joined, mode);
  }

  const std::string& raw() const noexcept { return raw_; }
  const std::vector<std::string>& units() const noexcept { return units_; }
  std::size_t unit_count() const noexcept { return units_.size(); }
  bool empty() const noexcept { return units_.empty(); }
  SegmentMode mode() const noexcept { return mode_; }

  // Reassembles raw from units and original separators.
  std::string reassemble() const {
    std::string out = gaps_[0];
    for (std::size_t i = 0; i < units_.size(); ++i) {
      out += units_[i];
      out += gaps_[i + 1];
    }
    return out;
  }

  friend bool operator==(const Sentence& a, const Sentence& b) {
    return a.raw_ == b.raw_ && a.mode_ == b.mode_;
  }
  friend bool operator!=(const Sentence& a, const Sentence& b) { return !(a == b); }

 private:
  std::string raw_;
  std::vector<std::string> units_;
  std::vector<std::string> gaps_;  // units_.size() + 1 entries
  SegmentMode mode_;
};

inline Sentence segment(std::string_view text, SegmentMode mode) {
  return Sentence::segment(text, mode);
}

// ---------------------------------------------------------------------------
// Perturbation records

enum class PerturbKind {
  Visual,
  Phonetic,
  Split,
  PerfectPinyin,
  AbbrevPinyin,
  Unicode,
  Insert,
  Swap,
  Delete,
  Wordnet,
  Embedding,
  Charswap,
  Eda,
  Checklist,
};

inline std::string_view to_string(PerturbKind kind) {
  switch (kind) {
    case PerturbKind::Visual: return "visual";
    case PerturbKind::Phonetic: return "phonetic";
    case PerturbKind::Split: return "split";
    case PerturbKind::PerfectPinyin: return "perfect-pinyin";
    case PerturbKind::AbbrevPinyin: return "abbrev-pinyin";
    case PerturbKind::Unicode: return "unicode";
    case PerturbKind::Insert: return "insert";
    case PerturbKind::Swap: return "swap";
    case PerturbKind::Delete: return "delete";
    case PerturbKind::Wordnet: return "wordnet";
    case PerturbKind::Embedding: return "embedding";
    case PerturbKind::Charswap: return "charswap";
    case PerturbKind::Eda: return "eda";
    case PerturbKind::Checklist: return "checklist";
  }
  return "?";
}

inline PerturbKind perturb_kind_from(std::string_view name) {
  static const std::unordered_map<std::string_view, PerturbKind> table = {
      {"visual", PerturbKind::Visual},         {"phonetic", PerturbKind::Phonetic},
      {"split", PerturbKind::Split},           {"perfect-pinyin", PerturbKind::PerfectPinyin},
      {"abbrev-pinyin", PerturbKind::AbbrevPinyin}, {"unicode", PerturbKind::Unicode},
      {"insert", PerturbKind::Insert},         {"swap", PerturbKind::Swap},
      {"delete", PerturbKind::Delete},         {"wordnet", PerturbKind::Wordnet},
      {"embedding", PerturbKind::Embedding},   {"charswap", PerturbKind::Charswap},
      {"eda", PerturbKind::Eda},               {"checklist", PerturbKind::Checklist},
  };
  auto it = table.find(name);
  if (it == table.end()) throw std::invalid_argument("unknown perturbation kind: " + std::string(name));
  return it->second;
}

// One replayable edit. `pos` is a unit index valid at replay time, i.e. with
// earlier ops of the same script already applied.
//  - Insert: insert `repl` at pos (orig empty)
//  - Delete: erase the unit at pos (repl empty)
//  - Swap:   exchange units pos and pos+1
//  - otherwise: replace the unit at pos with `repl` (an opaque span)
struct PerturbOp {
  PerturbKind kind;
  std::size_t pos = 0;
  std::string orig;
  std::string repl;

  friend bool operator==(const PerturbOp&, const PerturbOp&) = default;
};

using EditScript = std::vector<PerturbOp>;

struct ParallelPair {
  Sentence source;  // perturbed input
  Sentence target;  // clean reference
  std::optional<EditScript> ops;
  std::vector<std::string> flags;

  bool has_flag(std::string_view f) const {
    for (const auto& x : flags)
      if (x == f) return true;
    return false;
  }
};

// ---------------------------------------------------------------------------
// Vocabulary

class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kBos = 1;
  static constexpr int kEos = 2;
  static constexpr int kUnk = 3;

  Vocabulary() {
    id_to_unit_ = {"<pad>", "<bos>", "<eos>", "<unk>"};
    for (int i = 0; i < static_cast<int>(id_to_unit_.size()); ++i)
      unit_to_id_[id_to_unit_[i]] = i;
  }

  // Adds a unit if absent, returns its id.
  int add(const std::string& unit) {
    auto it = unit_to_id_.find(unit);
    if (it != unit_to_id_.end()) return it->second;
    const int id = static_cast<int>(id_to_unit_.size());
    id_to_unit_.push_back(unit);
    unit_to_id_.emplace(unit, id);
    return id;
  }

  int id_of(const std::string& unit) const {
    auto it = unit_to_id_.find(unit);
    return it == unit_to_id_.end() ? kUnk : it->second;
  }

  bool contains(const std::string& unit) const { return unit_to_id_.count(unit) != 0; }

  const std::string& unit_of(int id) const {
    if (id < 0 || id >= static_cast<int>(id_to_unit_.size()))
      throw std::out_of_range("Vocabulary::unit_of: id " + std::to_string(id));
    return id_to_unit_[id];
  }

  std::size_t size() const noexcept { return id_to_unit_.size(); }

  std::vector<int> encode(const Sentence& s) const {
    std::vector<int> ids;
    ids.reserve(s.unit_count());
    for (const auto& u : s.units()) ids.push_back(id_of(u));
    return ids;
  }

  // Ids in insertion order, reserved entries first. Serialization-friendly.
  const std::vector<std::string>& entries() const noexcept { return id_to_unit_; }

  static Vocabulary from_entries(std::span<const std::string> entries) {
    Vocabulary v;
    if (entries.size() < 4) throw std::invalid_argument("Vocabulary::from_entries: missing reserved ids");
    for (std::size_t i = 0; i < 4; ++i)
      if (entries[i] != v.id_to_unit_[i])
        throw std::invalid_argument("Vocabulary::from_entries: reserved ids corrupted");
    for (std::size_t i = 4; i < entries.size(); ++i) v.add(entries[i]);
    if (v.size() != entries.size())
      throw std::invalid_argument("Vocabulary::from_entries: duplicate units");
    return v;
  }

 private:
  std::vector<std::string> id_to_unit_;
  std::unordered_map<std::string, int> unit_to_id_;
};

// ---------------------------------------------------------------------------
// Alignment

enum class EditStep { Match, Sub, Del, Ins };

struct AlignStep {
  EditStep op;
  // a_index is meaningful for Match/Sub/Del, b_index for Match/Sub/Ins.
  // The inapplicable index holds the cursor position at that point.
  std::size_t a_index = 0;
  std::size_t b_index = 0;

  friend bool operator==(const AlignStep&, const AlignStep&) = default;
};

struct Alignment {
  std::vector<AlignStep> steps;
  std::size_t cost = 0;
};

// Minimal-cost unit alignment; ties broken MATCH > SUB > DEL > INS so
// downstream counting is deterministic.
inline Alignment levenshtein_align(const Sentence& a, const Sentence& b) {
  const auto& ua = a.units();
  const auto& ub = b.units();
  const std::size_t n = ua.size(), m = ub.size();
  std::vector<std::size_t> dist((n + 1) * (m + 1));
  auto d = [&](std::size_t i, std::size_t j) -> std::size_t& { return dist[i * (m + 1) + j]; };
  for (std::size_t i = 0; i <= n; ++i) d(i, 0) = i;
  for (std::size_t j = 0; j <= m; ++j) d(0, j) = j;
  for (std::size_t i = 1; i <= n; ++i) {
    for (std::size_t j = 1; j <= m; ++j) {
      const std::size_t sub = d(i - 1, j - 1) + (ua[i - 1] == ub[j - 1] ? 0 : 1);
      const std::size_t del = d(i - 1, j) + 1;
      const std::size_t ins = d(i, j - 1) + 1;
      d(i, j) = std::min(sub, std::min(del, ins));
    }
  }

  Alignment out;
  out.cost = d(n, m);
  std::size_t i = n, j = m;
  std::vector<AlignStep> rev;
  while (i > 0 || j > 0) {
    if (i > 0 && j > 0 && ua[i - 1] == ub[j - 1] && d(i, j) == d(i - 1, j - 1)) {
      rev.push_back({EditStep::Match, i - 1, j - 1});
      --i, --j;
    } else if (i > 0 && j > 0 && d(i, j) == d(i - 1, j - 1) + 1) {
      rev.push_back({EditStep::Sub, i - 1, j - 1});
      --i, --j;
    } else if (i > 0 && d(i, j) == d(i - 1, j) + 1) {
      rev.push_back({EditStep::Del, i - 1, j});
      --i;
    } else {
      rev.push_back({EditStep::Ins, i, j - 1});
      --j;
    }
  }
  out.steps.assign(rev.rbegin(), rev.rend());
  return out;
}

}  // namespace textmend
