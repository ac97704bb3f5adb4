#pragma once

#include <string>
#include <vector>

namespace nrt {

// Porter suffix-stripping stemmer (the 1980 algorithm). Used only behind the
// evaluation --stem switch; scoring defaults to raw tokens.
namespace porter {

inline bool is_vowel(const std::string& w, std::size_t i) {
  switch (w[i]) {
    case 'a':
    case 'e':
    case 'i':
    case 'o':
    case 'u':
      return true;
    case 'y':
      // y is a vowel when preceded by a consonant
      return i > 0 && !is_vowel(w, i - 1);
    default:
      return false;
  }
}

// Measure m of a stem: the number of vowel-consonant sequences in
// [C](VC)^m[V].
inline int measure(const std::string& w) {
  int m = 0;
  std::size_t i = 0;
  const std::size_t n = w.size();
  while (i < n && !is_vowel(w, i)) ++i;  // skip initial consonants
  while (i < n) {
    while (i < n && is_vowel(w, i)) ++i;
    if (i == n) break;
    while (i < n && !is_vowel(w, i)) ++i;
    ++m;
  }
  return m;
}

inline bool contains_vowel(const std::string& w) {
  for (std::size_t i = 0; i < w.size(); ++i)
    if (is_vowel(w, i)) return true;
  return false;
}

inline bool double_consonant(const std::string& w) {
  const std::size_t n = w.size();
  return n >= 2 && w[n - 1] == w[n - 2] && !is_vowel(w, n - 1);
}

// *o: stem ends consonant-vowel-consonant where the final consonant is not
// w, x or y.
inline bool ends_cvc(const std::string& w) {
  const std::size_t n = w.size();
  if (n < 3) return false;
  if (is_vowel(w, n - 1) || !is_vowel(w, n - 2) || is_vowel(w, n - 3)) return false;
  const char c = w[n - 1];
  return c != 'w' && c != 'x' && c != 'y';
}

inline bool ends_with(const std::string& w, const std::string& suffix) {
  return w.size() >= suffix.size() &&
         w.compare(w.size() - suffix.size(), suffix.size(), suffix) == 0;
}

// Replace `suffix` by `repl` when the remaining stem has measure > min_m.
inline bool replace_m(std::string& w, const std::string& suffix, const std::string& repl,
                      int min_m) {
  if (!ends_with(w, suffix)) return false;
  const std::string stem = w.substr(0, w.size() - suffix.size());
  if (measure(stem) <= min_m) return true;  // matched, condition failed: stop rule group
  w = stem + repl;
  return true;
}

inline std::string stem(std::string w) {
  if (w.size() <= 2) return w;

  // Step 1a: plurals.
  if (ends_with(w, "sses")) {
    w.erase(w.size() - 2);
  } else if (ends_with(w, "ies")) {
    w.erase(w.size() - 2);
  } else if (ends_with(w, "ss")) {
    // keep
  } else if (ends_with(w, "s")) {
    w.pop_back();
  }

  // Step 1b: -eed / -ed / -ing.
  bool cleanup = false;
  if (ends_with(w, "eed")) {
    if (measure(w.substr(0, w.size() - 3)) > 0) w.pop_back();
  } else if (ends_with(w, "ed") && contains_vowel(w.substr(0, w.size() - 2))) {
    w.erase(w.size() - 2);
    cleanup = true;
  } else if (ends_with(w, "ing") && contains_vowel(w.substr(0, w.size() - 3))) {
    w.erase(w.size() - 3);
    cleanup = true;
  }
  if (cleanup) {
    if (ends_with(w, "at") || ends_with(w, "bl") || ends_with(w, "iz")) {
      w += 'e';
    } else if (double_consonant(w) && !ends_with(w, "l") && !ends_with(w, "s") &&
               !ends_with(w, "z")) {
      w.pop_back();
    } else if (measure(w) == 1 && ends_cvc(w)) {
      w += 'e';
    }
  }

  // Step 1c: y -> i when the stem has a vowel.
  if (ends_with(w, "y") && contains_vowel(w.substr(0, w.size() - 1))) w.back() = 'i';

  // Step 2 (m > 0 rules keyed on the penultimate letter in the original
  // description; a linear scan is fine at this size).
  static const std::pair<const char*, const char*> kStep2[] = {
      {"ational", "ate"}, {"tional", "tion"}, {"enci", "ence"}, {"anci", "ance"},
      {"izer", "ize"},    {"abli", "able"},   {"alli", "al"},   {"entli", "ent"},
      {"eli", "e"},       {"ousli", "ous"},   {"ization", "ize"}, {"ation", "ate"},
      {"ator", "ate"},    {"alism", "al"},    {"iveness", "ive"}, {"fulness", "ful"},
      {"ousness", "ous"}, {"aliti", "al"},    {"iviti", "ive"},   {"biliti", "ble"}};
  for (const auto& [suffix, repl] : kStep2) {
    if (replace_m(w, suffix, repl, 0)) break;
  }

  // Step 3.
  static const std::pair<const char*, const char*> kStep3[] = {
      {"icate", "ic"}, {"ative", ""}, {"alize", "al"}, {"iciti", "ic"},
      {"ical", "ic"},  {"ful", ""},   {"ness", ""}};
  for (const auto& [suffix, repl] : kStep3) {
    if (replace_m(w, suffix, repl, 0)) break;
  }

  // Step 4: drop the suffix when m > 1.
  static const char* kStep4[] = {"al",    "ance", "ence", "er",  "ic",  "able", "ible",
                                 "ant",   "ement", "ment", "ent", "ou",  "ism",  "ate",
                                 "iti",   "ous",  "ive",  "ize"};
  bool step4_done = false;
  for (const char* suffix : kStep4) {
    if (!ends_with(w, suffix)) continue;
    const std::string stem_part = w.substr(0, w.size() - std::string(suffix).size());
    if (measure(stem_part) > 1) w = stem_part;
    step4_done = true;
    break;
  }
  if (!step4_done && ends_with(w, "ion")) {
    const std::string stem_part = w.substr(0, w.size() - 3);
    if (measure(stem_part) > 1 && !stem_part.empty() &&
        (stem_part.back() == 's' || stem_part.back() == 't')) {
      w = stem_part;
    }
  }

  // Step 5a: final -e.
  if (ends_with(w, "e")) {
    const std::string stem_part = w.substr(0, w.size() - 1);
    const int m = measure(stem_part);
    if (m > 1 || (m == 1 && !ends_cvc(stem_part))) w = stem_part;
  }

  // Step 5b: -ll -> -l when m > 1.
  if (measure(w) > 1 && double_consonant(w) && ends_with(w, "l")) w.pop_back();

  return w;
}

}  // namespace porter

inline std::vector<std::string> stem_tokens(const std::vector<std::string>& tokens) {
  std::vector<std::string> out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) out.push_back(porter::stem(t));
  return out;
}

}  // namespace nrt
