#include <gtest/gtest.h>

#include <sstream>

#include "zsd/ingest.hpp"

using namespace zsd;

TEST(Ingest, ParsesWrite) {
  const auto e = parse_event_line(R"({"ts":0,"entity":"p1","kind":"file_write","bytes":4096,"entropy":7.9,"path":"/a.docx"})");
  EXPECT_EQ(e.ts, 0);
  EXPECT_EQ(e.entity, "p1");
  EXPECT_EQ(e.kind, EventKind::file_write);
  EXPECT_EQ(e.bytes, 4096u);
  EXPECT_DOUBLE_EQ(*e.entropy, 7.9);
  EXPECT_EQ(*e.path, "/a.docx");
  EXPECT_FALSE(e.truth.has_value());
}

TEST(Ingest, ParsesRename) {
  const auto e = parse_event_line(
      R"({"ts":5,"entity":"p1","kind":"file_rename","path":"/a.docx","ext_before":"docx","ext_after":"lock"})");
  EXPECT_EQ(e.kind, EventKind::file_rename);
  EXPECT_EQ(*e.ext_before, "docx");
  EXPECT_EQ(*e.ext_after, "lock");
}

TEST(Ingest, SchemaViolations) {
  EXPECT_THROW(parse_event_line(R"({"ts":1,"entity":"p1","kind":"file_write","entropy":9.5})"), SchemaError);
  EXPECT_THROW(parse_event_line(R"({"ts":-1,"entity":"p1","kind":"file_read"})"), SchemaError);
  EXPECT_THROW(parse_event_line(R"({"ts":1,"entity":"","kind":"file_read"})"), SchemaError);
  EXPECT_THROW(parse_event_line(R"({"ts":1,"entity":"p","kind":"file_rename"})"), SchemaError);
  EXPECT_THROW(parse_event_line(R"({"ts":1,"entity":"p","kind":"file_read","ext_after":"x"})"), SchemaError);
  EXPECT_THROW(parse_event_line(R"({"ts":1,"entity":"p","kind":"file_read","bytes":-3})"), SchemaError);
}

TEST(Ingest, MalformedRecords) {
  try {
    parse_event_line("{not json", 7);
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line_no(), 7u);
  }
  EXPECT_THROW(parse_event_line(R"({"entity":"p","kind":"file_read"})"), ParseError);
  EXPECT_THROW(parse_event_line(R"({"ts":1.5,"entity":"p","kind":"file_read"})"), ParseError);
  EXPECT_THROW(parse_event_line(R"({"ts":1,"entity":"p","kind":"teleport"})"), ParseError);
  EXPECT_THROW(parse_event_line("[1,2]"), ParseError);
}

TEST(Ingest, StrictRejectsUnknownKeys) {
  const std::string line = R"({"ts":1,"entity":"p","kind":"file_read","color":"red"})";
  EXPECT_NO_THROW(parse_event_line(line, 1, false));
  EXPECT_THROW(parse_event_line(line, 1, true), ParseError);
}

TEST(Ingest, StreamCountsAndOrder) {
  std::istringstream in(
      "{\"ts\":1,\"entity\":\"a\",\"kind\":\"file_read\"}\n"
      "garbage\n"
      "\n"
      "{\"ts\":0,\"entity\":\"b\",\"kind\":\"file_read\"}\n");
  EventStream s(in, false);
  const auto events = s.read_all();
  ASSERT_EQ(events.size(), 2u);
  EXPECT_EQ(events[0].entity, "a");
  EXPECT_EQ(events[1].entity, "b");
  EXPECT_EQ(s.skipped_count(), 1u);
  EXPECT_EQ(s.out_of_order_count(), 1u);

  std::istringstream again("{\"ts\":1,\"entity\":\"a\",\"kind\":\"file_read\"}\ngarbage\n");
  EventStream strict(again, true);
  EXPECT_TRUE(strict.next().has_value());
  EXPECT_THROW(strict.next(), ParseError);
}

TEST(Ingest, EmptyStream) {
  std::istringstream in("");
  EventStream s(in, true);
  EXPECT_TRUE(s.read_all().empty());
  EXPECT_EQ(s.skipped_count(), 0u);
}

TEST(Ingest, MissingFileIsIoError) { EXPECT_THROW(EventStream("/nonexistent/zsd.jsonl", false), IoError); }

TEST(Ingest, FormatRoundTrip) {
  Event e;
  e.ts = 1700000000123456;
  e.entity = "host/\"quoted\"\\proc";
  e.kind = EventKind::file_rename;
  e.path = "C:\\Users\\a.docx";
  e.ext_before = "docx";
  e.ext_after = "lockbit";
  e.bytes = 12345;
  e.entropy = 7.8125;
  e.dst = "10.0.0.1";
  e.truth = Label::malicious;
  const std::string line = format_event_line(e);
  const Event back = parse_event_line(line, 1, true);
  EXPECT_EQ(format_event_line(back), line);
  EXPECT_EQ(back.entity, e.entity);
  EXPECT_EQ(back.path, e.path);
  EXPECT_EQ(back.entropy, e.entropy);
  EXPECT_EQ(back.truth, e.truth);
}
