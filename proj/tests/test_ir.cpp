#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "helpers.hpp"
#include "kom/ir.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace kom;
using namespace kom::ir;

namespace {

std::string read_file(const std::filesystem::path& p) {
  std::ifstream f(p);
  std::ostringstream os;
  os << f.rdbuf();
  return os.str();
}

int error_count(const std::vector<Diagnostic>& ds) {
  int n = 0;
  for (const auto& d : ds)
    if (d.severity == Severity::Error) n++;
  return n;
}

} // namespace

TEST_CASE("minimal well-formed unit") {
  ParseResult r = parse_program("fn @f(%p: ptr ko:Timer) {\nentry:\n  ret\n}\n");
  REQUIRE(r.ok());
  CHECK(r.program->functions.size() == 1);
  CHECK(r.program->functions[0].blocks.size() == 1);
  CHECK(r.program->functions[0].params[0].anno == PtrAnno::KernelObject);
  CHECK(r.program->functions[0].params[0].object_type == "Timer");
  CHECK(validate_program(*r.program).empty());
}

TEST_CASE("br without an else label is a diagnostic at that line") {
  std::string src = "fn @f(%x: u32) {\nentry:\n  %c = icmp.eq %x, 0\n  br %c, a\na:\n  ret\n}\n";
  ParseResult r = parse_program(src);
  CHECK(!r.ok());
  bool found = false;
  for (const auto& d : r.diagnostics)
    if (d.line == 4 && d.severity == Severity::Error) found = true;
  CHECK(found);
}

TEST_CASE("duplicate function name") {
  ParseResult r = parse_program(
      "fn @f(%x: u32) {\nentry:\n  ret\n}\nfn @f(%y: u32) {\nentry:\n  ret\n}\n");
  CHECK(!r.ok());
}

TEST_CASE("two terminators in one block") {
  // built by hand: the parser refuses mid-block terminators, the validator
  // must catch programs constructed another way
  ParseResult r = parse_program("fn @f(%x: u32) {\nentry:\n  ret\n}\n");
  REQUIRE(r.ok());
  Program p = *r.program;
  Instruction extra;
  extra.op = Opcode::Ret;
  p.functions[0].blocks[0].instructions.push_back(extra);
  CHECK(error_count(validate_program(p)) == 1);
}

TEST_CASE("use before definition on one path") {
  // %v is defined only on the left arm; the join block uses it
  std::string src =
      "fn @f(%x: u32) {\n"
      "entry:\n"
      "  %c = icmp.eq %x, 0\n"
      "  br %c, left, right\n"
      "left:\n"
      "  %v = add %x, 1\n"
      "  jmp join\n"
      "right:\n"
      "  jmp join\n"
      "join:\n"
      "  %w = add %v, 1\n"
      "  ret\n"
      "}\n";
  ParseResult r = parse_program(src);
  REQUIRE(r.ok());
  auto diags = validate_program(*r.program);
  REQUIRE(error_count(diags) == 1);
  bool names_register = false;
  for (const auto& d : diags)
    if (d.message.find("%v") != std::string::npos) names_register = true;
  CHECK(names_register);
}

TEST_CASE("unreferenced block label is rejected") {
  std::string src = "fn @f(%x: u32) {\nentry:\n  ret\norphan:\n  ret\n}\n";
  ParseResult r = parse_program(src);
  REQUIRE(r.ok());
  CHECK(error_count(validate_program(*r.program)) == 1);
}

TEST_CASE("undefined call target and named constant") {
  ParseResult r = parse_program(
      "fn @f(%p: ptr) {\nentry:\n  call @nothere(%p)\n  %a = const $MISSING\n  ret\n}\n");
  REQUIRE(r.ok());
  CHECK(error_count(validate_program(*r.program)) == 2);
}

TEST_CASE("load address must be pointer-kinded") {
  ParseResult r =
      parse_program("fn @f(%x: u32) {\nentry:\n  %v = load.w %x\n  ret\n}\n");
  REQUIRE(r.ok());
  CHECK(error_count(validate_program(*r.program)) == 1);
  // gep re-kinds a word into a pointer
  ParseResult ok = parse_program(
      "fn @f(%x: u32) {\nentry:\n  %p = gep %x, 0\n  %v = load.w %p\n  ret\n}\n");
  REQUIRE(ok.ok());
  CHECK(validate_program(*ok.program).empty());
}

TEST_CASE("empty-function program prints canonically") {
  ParseResult r = parse_program("fn @f() {\nentry:\n  ret\n}\n");
  REQUIRE(r.ok());
  CHECK(pretty_print(*r.program) == "fn @f() {\nentry:\n  ret\n}\n\n");
}

TEST_CASE("round-trip over the fixture corpus") {
  // parse(print(P)) is structurally equal to P for every fixture
  int files = 0;
  for (const auto& entry : std::filesystem::directory_iterator(test::fixtures_dir())) {
    if (entry.path().extension() != ".kir") continue;
    files++;
    std::string text = read_file(entry.path());
    ParseResult first = parse_program(text, entry.path().filename().string());
    REQUIRE_MESSAGE(first.ok(), entry.path().filename().string());
    std::string printed = pretty_print(*first.program);
    ParseResult second = parse_program(printed);
    REQUIRE_MESSAGE(second.ok(), entry.path().filename().string());
    CHECK_MESSAGE(structurally_equal(*first.program, *second.program),
                  entry.path().filename().string());
    // printing is deterministic byte for byte
    CHECK(pretty_print(*second.program) == printed);
  }
  CHECK(files >= 12);
}

TEST_CASE("parser determinism") {
  std::string text = read_file(std::filesystem::path(test::fixtures_dir()) / "timer_create.kir");
  ParseResult a = parse_program(text);
  ParseResult b = parse_program(text);
  REQUIRE(a.ok());
  REQUIRE(b.ok());
  CHECK(structurally_equal(*a.program, *b.program));
}

TEST_CASE("parse is total on malformed input") {
  // arbitrary junk produces diagnostics, not crashes
  const char* junk[] = {
      "fn @",
      "fn @f(%p: wat) {",
      "}",
      "entry:",
      "fn @f() {\nentry:\n  %x = frobnicate 1, 2\n  ret\n}",
      "fn @f() {\nentry:\n  store.w 4\n  ret\n}",
      "const $X = ",
      "fn @f() {\nentry:\n  jmp nowhere\n}\n",
  };
  for (const char* j : junk) {
    ParseResult r = parse_program(j);
    if (r.ok()) {
      CHECK(!validate_program(*r.program).empty());
    } else {
      CHECK(!r.diagnostics.empty());
    }
  }
}

TEST_CASE("block parameters carry loop state") {
  std::string src =
      "fn @f(%n: u32) {\n"
      "entry:\n"
      "  jmp loop(0)\n"
      "loop(%i: u32):\n"
      "  %c = icmp.ult %i, %n\n"
      "  br %c, body, done\n"
      "body:\n"
      "  %i2 = add %i, 1\n"
      "  jmp loop(%i2)\n"
      "done:\n"
      "  ret\n"
      "}\n";
  ParseResult r = parse_program(src);
  REQUIRE(r.ok());
  CHECK(validate_program(*r.program).empty());
  // argument count mismatches are errors
  std::string bad =
      "fn @f(%n: u32) {\nentry:\n  jmp loop\nloop(%i: u32):\n  ret\n}\n";
  ParseResult rb = parse_program(bad);
  REQUIRE(rb.ok());
  CHECK(error_count(validate_program(*rb.program)) == 1);
}
