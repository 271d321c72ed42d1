#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace pdenff {

inline std::string to_lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

inline bool iequals(std::string_view a, std::string_view b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (std::tolower(static_cast<unsigned char>(a[i])) != std::tolower(static_cast<unsigned char>(b[i])))
      return false;
  }
  return true;
}

inline bool icontains(std::string_view haystack, std::string_view needle) {
  if (needle.empty()) return true;
  const std::string h = to_lower(haystack);
  const std::string n = to_lower(needle);
  return h.find(n) != std::string::npos;
}

inline std::string collapse_whitespace(std::string_view s) {
  std::string out;
  bool in_space = true;  // also trims leading space
  for (char c : s) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      if (!in_space) out.push_back(' ');
      in_space = true;
    } else {
      out.push_back(c);
      in_space = false;
    }
  }
  while (!out.empty() && out.back() == ' ') out.pop_back();
  return out;
}

inline int hex_value(char c) {
  if (c >= '0' && c <= '9') return c - '0';
  if (c >= 'a' && c <= 'f') return c - 'a' + 10;
  if (c >= 'A' && c <= 'F') return c - 'A' + 10;
  return -1;
}

inline std::string base64_decode(std::string_view in) {
  auto val = [](char c) -> int {
    if (c >= 'A' && c <= 'Z') return c - 'A';
    if (c >= 'a' && c <= 'z') return c - 'a' + 26;
    if (c >= '0' && c <= '9') return c - '0' + 52;
    if (c == '+') return 62;
    if (c == '/') return 63;
    return -1;
  };
  std::string out;
  out.reserve(in.size() * 3 / 4);
  int buffer = 0, bits = 0;
  for (char c : in) {
    if (c == '=') break;
    const int v = val(c);
    if (v < 0) continue;  // skip line breaks and stray bytes
    buffer = (buffer << 6) | v;
    bits += 6;
    if (bits >= 8) {
      bits -= 8;
      out.push_back(static_cast<char>((buffer >> bits) & 0xff));
    }
  }
  return out;
}

// mode distinguishes body quoted-printable from RFC 2047 Q-encoding, where
// '_' stands for space.
inline std::string quoted_printable_decode(std::string_view in, bool q_encoding = false) {
  std::string out;
  out.reserve(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) {
    const char c = in[i];
    if (c == '=' && i + 2 < in.size() && hex_value(in[i + 1]) >= 0 && hex_value(in[i + 2]) >= 0) {
      out.push_back(static_cast<char>(hex_value(in[i + 1]) * 16 + hex_value(in[i + 2])));
      i += 2;
    } else if (c == '=' && i + 1 < in.size() && (in[i + 1] == '\r' || in[i + 1] == '\n')) {
      // soft line break
      if (in[i + 1] == '\r' && i + 2 < in.size() && in[i + 2] == '\n') i += 2;
      else i += 1;
    } else if (q_encoding && c == '_') {
      out.push_back(' ');
    } else {
      out.push_back(c);
    }
  }
  return out;
}

// Latin-1 / Windows-1252-ish bytes to UTF-8; the lossy fallback for
// undeclared or unknown charsets.
inline std::string latin1_to_utf8(std::string_view in) {
  std::string out;
  out.reserve(in.size());
  for (unsigned char c : in) {
    if (c < 0x80) {
      out.push_back(static_cast<char>(c));
    } else {
      out.push_back(static_cast<char>(0xc0 | (c >> 6)));
      out.push_back(static_cast<char>(0x80 | (c & 0x3f)));
    }
  }
  return out;
}

inline bool looks_like_utf8(std::string_view s) {
  std::size_t i = 0;
  while (i < s.size()) {
    const unsigned char c = static_cast<unsigned char>(s[i]);
    std::size_t extra;
    if (c < 0x80) extra = 0;
    else if ((c >> 5) == 0x6) extra = 1;
    else if ((c >> 4) == 0xe) extra = 2;
    else if ((c >> 3) == 0x1e) extra = 3;
    else return false;
    if (extra > 0 && i + extra >= s.size()) return false;  // truncated sequence
    for (std::size_t k = 1; k <= extra; ++k) {
      if ((static_cast<unsigned char>(s[i + k]) >> 6) != 0x2) return false;
    }
    i += extra + 1;
  }
  return true;
}

// Decode to UTF-8 given a declared charset; unknown charsets degrade to the
// Latin-1 reading so parsing stays total.
inline std::string decode_charset(std::string_view bytes, std::string_view charset) {
  const std::string cs = to_lower(trim(charset));
  if (cs.empty() || cs == "utf-8" || cs == "utf8" || cs == "us-ascii" || cs == "ascii") {
    if (looks_like_utf8(bytes)) return std::string(bytes);
    return latin1_to_utf8(bytes);
  }
  if (cs.rfind("iso-8859", 0) == 0 || cs.rfind("windows-125", 0) == 0 || cs == "latin1" ||
      cs == "latin-1") {
    return latin1_to_utf8(bytes);
  }
  if (looks_like_utf8(bytes)) return std::string(bytes);
  return latin1_to_utf8(bytes);
}

// Decodes the common named entities plus numeric references. Unknown
// references pass through untouched.
inline std::string decode_html_entities(std::string_view in) {
  static const std::array<std::pair<std::string_view, std::string_view>, 12> kNamed = {{
      {"amp", "&"},
      {"lt", "<"},
      {"gt", ">"},
      {"quot", "\""},
      {"apos", "'"},
      {"nbsp", " "},
      {"copy", "\xc2\xa9"},
      {"reg", "\xc2\xae"},
      {"mdash", "\xe2\x80\x94"},
      {"ndash", "\xe2\x80\x93"},
      {"hellip", "\xe2\x80\xa6"},
      {"trade", "\xe2\x84\xa2"},
  }};
  std::string out;
  out.reserve(in.size());
  std::size_t i = 0;
  while (i < in.size()) {
    if (in[i] != '&') {
      out.push_back(in[i++]);
      continue;
    }
    const std::size_t semi = in.find(';', i + 1);
    if (semi == std::string_view::npos || semi - i > 12) {
      out.push_back(in[i++]);
      continue;
    }
    const std::string_view name = in.substr(i + 1, semi - i - 1);
    if (!name.empty() && name[0] == '#') {
      std::uint32_t cp = 0;
      bool ok = name.size() > 1;
      if (name.size() > 2 && (name[1] == 'x' || name[1] == 'X')) {
        for (std::size_t k = 2; k < name.size() && ok; ++k) {
          const int h = hex_value(name[k]);
          if (h < 0) ok = false;
          else cp = cp * 16 + static_cast<std::uint32_t>(h);
        }
      } else {
        for (std::size_t k = 1; k < name.size() && ok; ++k) {
          if (!std::isdigit(static_cast<unsigned char>(name[k]))) ok = false;
          else cp = cp * 10 + static_cast<std::uint32_t>(name[k] - '0');
        }
      }
      if (ok && cp > 0 && cp <= 0x10ffff) {
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
        i = semi + 1;
        continue;
      }
    } else {
      bool matched = false;
      for (const auto& [n, repl] : kNamed) {
        if (iequals(name, n)) {
          out.append(repl);
          i = semi + 1;
          matched = true;
          break;
        }
      }
      if (matched) continue;
    }
    out.push_back(in[i++]);
  }
  return out;
}

// Tag-stripping HTML-to-text: script/style contents dropped, block-ish tags
// become whitespace, entities decoded, whitespace collapsed.
inline std::string html_to_text(std::string_view html) {
  std::string out;
  out.reserve(html.size());
  std::size_t i = 0;
  while (i < html.size()) {
    if (html[i] == '<') {
      // comments
      if (html.compare(i, 4, "<!--") == 0) {
        const std::size_t end = html.find("-->", i + 4);
        i = end == std::string_view::npos ? html.size() : end + 3;
        continue;
      }
      const std::size_t close = html.find('>', i);
      if (close == std::string_view::npos) break;
      std::string_view tag = html.substr(i + 1, close - i - 1);
      if (!tag.empty() && tag[0] == '/') tag.remove_prefix(1);
      std::size_t name_end = 0;
      while (name_end < tag.size() && (std::isalnum(static_cast<unsigned char>(tag[name_end])) ||
                                       tag[name_end] == '!')) {
        name_end++;
      }
      const std::string name = to_lower(tag.substr(0, name_end));
      if ((name == "script" || name == "style") && html[i + 1] != '/') {
        const std::string closing = "</" + name;
        std::size_t end = i;
        const std::string lowered = to_lower(html.substr(i));
        const std::size_t rel = lowered.find(closing, close - i);
        if (rel == std::string::npos) {
          i = html.size();
          continue;
        }
        end = i + rel;
        const std::size_t gt = html.find('>', end);
        i = gt == std::string_view::npos ? html.size() : gt + 1;
        continue;
      }
      out.push_back(' ');
      i = close + 1;
    } else {
      out.push_back(html[i++]);
    }
  }
  return collapse_whitespace(decode_html_entities(out));
}

// RFC 2047 encoded-word decoding for header values; malformed words stay as
// they came in.
inline std::string decode_encoded_words(std::string_view value) {
  std::string out;
  std::size_t i = 0;
  bool last_was_encoded = false;
  while (i < value.size()) {
    const std::size_t start = value.find("=?", i);
    if (start == std::string_view::npos) {
      out.append(value.substr(i));
      break;
    }
    const std::size_t q1 = value.find('?', start + 2);
    if (q1 == std::string_view::npos) {
      out.append(value.substr(i));
      break;
    }
    const std::size_t q2 = value.find('?', q1 + 1);
    if (q2 == std::string_view::npos || q2 != q1 + 2) {
      out.append(value.substr(i, start + 2 - i));
      i = start + 2;
      last_was_encoded = false;
      continue;
    }
    const std::size_t end = value.find("?=", q2 + 1);
    if (end == std::string_view::npos) {
      out.append(value.substr(i));
      break;
    }
    const std::string_view between = value.substr(i, start - i);
    // whitespace between adjacent encoded words is dropped
    if (!(last_was_encoded && trim(between).empty())) out.append(between);

    const std::string_view charset = value.substr(start + 2, q1 - start - 2);
    const char enc = static_cast<char>(std::tolower(static_cast<unsigned char>(value[q1 + 1])));
    const std::string_view payload = value.substr(q2 + 1, end - q2 - 1);
    std::string decoded;
    if (enc == 'b') decoded = base64_decode(payload);
    else if (enc == 'q') decoded = quoted_printable_decode(payload, /*q_encoding=*/true);
    else decoded = std::string(value.substr(start, end + 2 - start));  // leave raw
    out.append(decode_charset(decoded, charset));
    i = end + 2;
    last_was_encoded = true;
  }
  return out;
}

// 64-bit FNV-1a; stable content identifier for messages without a Message-ID.
inline std::string fnv1a_hex(std::string_view bytes) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  static const char* digits = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<std::size_t>(i)] = digits[h & 0xf];
    h >>= 4;
  }
  return out;
}

}  // namespace pdenff
