#include "enlg/text.hpp"

#include <unicode/normalizer2.h>
#include <unicode/uchar.h>
#include <unicode/unistr.h>
#include <unicode/locid.h>

#include "enlg/errors.hpp"

namespace enlg::text {

namespace {

icu::UnicodeString from_utf8(std::string_view input) {
  // ICU maps ill-formed sequences to U+FFFD; reject them instead.
  icu::UnicodeString s = icu::UnicodeString::fromUTF8(icu::StringPiece(input.data(),
                                                                        static_cast<int32_t>(input.size())));
  if (s.indexOf(static_cast<UChar32>(0xFFFD)) >= 0 &&
      input.find("\xEF\xBF\xBD") == std::string_view::npos)
    throw FormatError("invalid UTF-8 in text field");
  return s;
}

std::string to_utf8(const icu::UnicodeString& s) {
  std::string out;
  s.toUTF8String(out);
  return out;
}

}  // namespace

std::string normalize(std::string_view input) {
  UErrorCode status = U_ZERO_ERROR;
  const icu::Normalizer2* nfc = icu::Normalizer2::getNFCInstance(status);
  if (U_FAILURE(status)) throw Error("icu", "NFC normalizer unavailable");
  icu::UnicodeString normalized = nfc->normalize(from_utf8(input), status);
  if (U_FAILURE(status)) throw FormatError("NFC normalization failed");

  icu::UnicodeString collapsed;
  bool pending_space = false;
  for (int32_t i = 0; i < normalized.length();) {
    const UChar32 c = normalized.char32At(i);
    i += U16_LENGTH(c);
    if (u_isUWhiteSpace(c)) {
      pending_space = !collapsed.isEmpty();
      continue;
    }
    if (pending_space) collapsed.append(static_cast<UChar>(' '));
    pending_space = false;
    collapsed.append(c);
  }
  return to_utf8(collapsed);
}

std::string lowercase(std::string_view input) {
  icu::UnicodeString s = from_utf8(input);
  s.toLower(icu::Locale::getRoot());
  return to_utf8(s);
}

std::vector<std::string> split_words(std::string_view input) {
  std::vector<std::string> words;
  const icu::UnicodeString s = from_utf8(input);
  icu::UnicodeString current;
  for (int32_t i = 0; i < s.length();) {
    const UChar32 c = s.char32At(i);
    i += U16_LENGTH(c);
    if (u_isUWhiteSpace(c)) {
      if (!current.isEmpty()) words.push_back(to_utf8(current));
      current.remove();
    } else {
      current.append(c);
    }
  }
  if (!current.isEmpty()) words.push_back(to_utf8(current));
  return words;
}

}  // namespace enlg::text
