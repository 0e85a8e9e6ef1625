#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "helpers.hpp"
#include "kom/model.hpp"

using namespace kom;
using namespace kom::model;

TEST_CASE("fixture manifest loads with the expected type specs") {
  LoadResult r = load_manifest(test::manifest_path());
  REQUIRE(r.ok());
  const Model& m = *r.model;
  CHECK(m.types.size() == 8);

  const KernelObjectTypeSpec* timer = m.type_named("Timer");
  REQUIRE(timer);
  CHECK(timer->size == 64);
  CHECK(timer->type_id == 0x54494D45);

  const KernelObjectTypeSpec* thread = m.type_named("Thread");
  REQUIRE(thread);
  CHECK(thread->type_id == 0x54485244);
  CHECK(thread->fields[0].offset == 0);
  CHECK(thread->fields[0].width == 32);
}

TEST_CASE("field_at_offset") {
  LoadResult r = load_manifest(test::manifest_path());
  REQUIRE(r.ok());
  const KernelObjectTypeSpec* thread = r.model->type_named("Thread");
  REQUIRE(thread);

  // the first field is always at offset 0
  const FieldSpec* id = thread->field_at_offset(0);
  REQUIRE(id);
  CHECK(id->name == "thread_id");

  // the dereferenced stack pointer is a pointer field
  const FieldSpec* stack = thread->field_named("thread_stack_start");
  REQUIRE(stack);
  const FieldSpec* at = thread->field_at_offset(stack->offset);
  REQUIRE(at);
  CHECK(at->kind == FieldSpec::Kind::Pointer);
  // interior bytes of a word field resolve to the same field
  CHECK(thread->field_at_offset(stack->offset + 3) == at);

  // out of bounds
  const KernelObjectTypeSpec* timer = r.model->type_named("Timer");
  CHECK(timer->field_at_offset(timer->size + 4) == nullptr);
}

TEST_CASE("load is idempotent") {
  LoadResult a = load_manifest(test::manifest_path());
  LoadResult b = load_manifest(test::manifest_path());
  REQUIRE(a.ok());
  REQUIRE(b.ok());
  CHECK(a.model->types.size() == b.model->types.size());
  CHECK(a.model->type_ids() == b.model->type_ids());
  CHECK(a.model->constants == b.model->constants);
  for (size_t i = 0; i < a.model->syscalls.size(); i++) {
    CHECK(a.model->syscalls[i].name == b.model->syscalls[i].name);
    CHECK(a.model->syscalls[i].object_type == b.model->syscalls[i].object_type);
  }
}

TEST_CASE("every fixture kernel-object annotation names a declared type") {
  const pipeline::Corpus& c = test::corpus();
  for (const auto& fn : c.program.functions)
    for (const auto& p : fn.params)
      if (p.anno == ir::PtrAnno::KernelObject)
        CHECK_MESSAGE(c.model.type_named(p.object_type) != nullptr, fn.name);
}

TEST_CASE("empty type list is rejected") {
  const char* text = R"(
[layout]
thread_region = [0x20000000, 0x20004000]
kernel_region = [0x20010000, 0x20020000]
device_region = [0xE0000000, 0xE0100000]
mpu_register = 0xE000ED94
kernel_alloc_base = 0x20010000
user_alloc_base = 0x20000800

[[syscalls]]
name = "x"
)";
  LoadResult r = load_manifest_text(text);
  CHECK(!r.ok());
  bool mentions = false;
  for (const auto& e : r.errors)
    if (e.find("at least one kernel object type") != std::string::npos) mentions = true;
  CHECK(mentions);
}

TEST_CASE("dangling type reference is rejected with its key path") {
  const char* text = R"(
[layout]
thread_region = [0x20000000, 0x20004000]
kernel_region = [0x20010000, 0x20020000]
device_region = [0xE0000000, 0xE0100000]
mpu_register = 0xE000ED94
kernel_alloc_base = 0x20010000
user_alloc_base = 0x20000800

[[types]]
name = "Timer"
type_id = 1
size = 8
fields = [ { name = "id", offset = 0, width = 32, kind = "scalar" } ]

[[syscalls]]
name = "foo_create"
object_param = 0
object_type = "Foo"
)";
  LoadResult r = load_manifest_text(text);
  CHECK(!r.ok());
  bool names_path = false;
  for (const auto& e : r.errors)
    if (e.find("object_type") != std::string::npos && e.find("Foo") != std::string::npos)
      names_path = true;
  CHECK(names_path);
}

TEST_CASE("structural type invariants are enforced") {
  const char* base = R"(
[layout]
thread_region = [0x20000000, 0x20004000]
kernel_region = [0x20010000, 0x20020000]
device_region = [0xE0000000, 0xE0100000]
mpu_register = 0xE000ED94
kernel_alloc_base = 0x20010000
user_alloc_base = 0x20000800

[[syscalls]]
name = "x"

[[types]]
name = "T"
type_id = 1
size = 8
)";
  // first field must sit at offset 0 with width 32
  LoadResult r1 = load_manifest_text(
      std::string(base) +
      "fields = [ { name = \"a\", offset = 4, width = 32, kind = \"scalar\" } ]\n");
  CHECK(!r1.ok());
  // offsets strictly increasing
  LoadResult r2 = load_manifest_text(
      std::string(base) +
      "fields = [ { name = \"a\", offset = 0, width = 32, kind = \"scalar\" },\n"
      "           { name = \"b\", offset = 0, width = 32, kind = \"scalar\" } ]\n");
  CHECK(!r2.ok());
  // field past the object size
  LoadResult r3 = load_manifest_text(
      std::string(base) +
      "fields = [ { name = \"a\", offset = 0, width = 32, kind = \"scalar\" },\n"
      "           { name = \"b\", offset = 8, width = 32, kind = \"scalar\" } ]\n");
  CHECK(!r3.ok());
}

TEST_CASE("disjoint regions and the MPU register placement are checked") {
  const char* text = R"(
[layout]
thread_region = [0x20000000, 0x20004000]
kernel_region = [0x20002000, 0x20020000]
device_region = [0xE0000000, 0xE0100000]
mpu_register = 0xE000ED94
kernel_alloc_base = 0x20010000
user_alloc_base = 0x20000800

[[types]]
name = "T"
type_id = 1
size = 8
fields = [ { name = "a", offset = 0, width = 32, kind = "scalar" } ]

[[syscalls]]
name = "x"
)";
  CHECK(!load_manifest_text(text).ok());
}
