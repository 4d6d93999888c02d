#ifndef GENCACHE_TEST_HELPERS_HPP
#define GENCACHE_TEST_HELPERS_HPP

#include <chrono>
#include <filesystem>
#include <random>
#include <string>

#include "gencache/embedding.hpp"
#include "gencache/llm.hpp"
#include "gencache/program.hpp"
#include "gencache/prompt.hpp"

namespace gencache::test {

inline Embedding unit(std::size_t dims, std::size_t axis) {
  Embedding e(dims);
  e.values[axis] = 1.0;
  return e;
}

inline Embedding vec(std::vector<double> v) {
  Embedding e(std::move(v));
  normalize(e);
  return e;
}

// Exemplar with hand-built embeddings; texts are irrelevant to clustering.
inline Exemplar exemplar(Embedding prompt, std::vector<Embedding> responses, std::string text = "p") {
  Exemplar ex;
  ex.prompt = PromptRecord::from_text("", std::move(text));
  if (responses.size() == 1) {
    ex.response = ResponseDoc::plain("r");
  } else {
    std::vector<ResponseDoc::Entry> entries;
    for (std::size_t i = 0; i < responses.size(); ++i) entries.emplace_back("k" + std::to_string(i), "v");
    ex.response = ResponseDoc::structured(std::move(entries));
  }
  ex.prompt_embedding = std::move(prompt);
  ex.response_embeddings = std::move(responses);
  return ex;
}

// Fresh directory removed on scope exit.
class TempDir {
 public:
  TempDir() {
    static std::mt19937_64 rng(std::random_device{}());
    path_ = std::filesystem::temp_directory_path() / ("gencache-test-" + std::to_string(rng()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

// A shopping assistant whose prompts share a long fixed prefix, so requests
// for different items land in one cluster.
inline constexpr std::string_view kShopPrefix =
    "You are a shopping assistant for an online store. Read the customer request below and reply with the "
    "single action the store front end should take next. Keep the reply on one line, keep the item name "
    "exactly as written, and never add commentary or alternatives. Customer request:";

inline std::string shop_prompt(std::string_view item) {
  return std::string(kShopPrefix) + " buy " + std::string(item) + " from Amazon";
}

inline std::string shop_reply(std::string_view item) {
  return "Open the store page, then Search(\"" + std::string(item) + "\") and confirm the first result";
}

// Answers shop prompts correctly; anything else gets a fixed reply.
inline std::string shop_agent(const std::vector<ChatMessage>& messages) {
  const auto& text = messages.back().content;
  auto a = text.rfind(" buy "), b = text.rfind(" from Amazon");
  if (a == std::string::npos || b == std::string::npos || b < a + 5) return "I can only help with purchases.";
  return shop_reply(text.substr(a + 5, b - a - 5));
}

inline ProgramSource shop_program() {
  ProgramSource s;
  s.structural_regex = "from amazon";
  s.rules = {{"buy (?<item>.+?) from amazon",
              ResponseTemplate::plain("Open the store page, then Search(\"{item}\") and confirm the first result")}};
  return s;
}

inline std::string fenced(const ProgramSource& s) { return "```json\n" + serialize_program(s) + "\n```"; }

inline const char* kItems[] = {"milk",         "usb cable",   "red shoes", "12 AAA batteries", "desk lamp",
                               "coffee beans", "green tea",   "kettle",    "wool socks",       "paper towels",
                               "mouse pad",    "headphones",  "notebook",  "stapler",          "water bottle",
                               "yoga mat",     "phone case",  "hdmi cable", "rice cooker",     "toaster"};

}  // namespace gencache::test

#endif  // GENCACHE_TEST_HELPERS_HPP
