#include <chrono>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <thread>

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/websocket.hpp>
#include <gtest/gtest.h>

#include "json.hpp"
#include "telemanip/teleop_service.hpp"

namespace telemanip {
namespace {

namespace beast = boost::beast;
namespace websocket = beast::websocket;
namespace asio = boost::asio;
using tcp = asio::ip::tcp;
using Json = nlohmann::json;
using namespace std::chrono_literals;

class Client {
 public:
  explicit Client(unsigned short port, const std::string& target = "/teleop") : ws_(ioc_) {
    beast::get_lowest_layer(ws_).connect(
        tcp::endpoint(asio::ip::make_address("127.0.0.1"), port));
    ws_.handshake("127.0.0.1", target);
  }

  std::optional<Json> read(std::chrono::milliseconds timeout = 3000ms) {
    beast::flat_buffer buf;
    beast::error_code ec;
    bool done = false;
    ws_.async_read(buf, [&](beast::error_code e, std::size_t) {
      ec = e;
      done = true;
    });
    ioc_.restart();
    ioc_.run_for(timeout);
    if (!done) {
      beast::get_lowest_layer(ws_).cancel();
      ioc_.restart();
      ioc_.run();
      return std::nullopt;
    }
    if (ec) return std::nullopt;
    return Json::parse(beast::buffers_to_string(buf.data()));
  }

  // Skips state frames until a message of the given type arrives.
  std::optional<Json> read_type(const std::string& type, int limit = 200) {
    for (int i = 0; i < limit; ++i) {
      auto m = read();
      if (!m) return std::nullopt;
      if ((*m)["type"] == type) return m;
    }
    return std::nullopt;
  }

  void send(const std::string& text) { ws_.write(asio::buffer(text)); }
  void send(const Json& j) { send(j.dump()); }
  void close() { ws_.close(websocket::close_code::normal); }

 private:
  asio::io_context ioc_;
  websocket::stream<beast::tcp_stream> ws_;
};

Json target(double x, double z, bool clutch, double t = 0.0) {
  return {{"type", "target"}, {"t", t}, {"device_x", x}, {"device_z", z}, {"clutch", clutch}};
}

class TeleopTest : public ::testing::Test {
 protected:
  void SetUp() override {
    log_path_ = std::filesystem::temp_directory_path() /
                ("telemanip_session_" +
                 std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()) +
                 ".csv");
    config_.port = 0;
    config_.session_log = log_path_.string();
  }

  void TearDown() override { std::filesystem::remove(log_path_); }

  std::vector<std::string> log_lines() const {
    std::ifstream in(log_path_);
    std::vector<std::string> lines;
    for (std::string line; std::getline(in, line);) lines.push_back(line);
    return lines;
  }

  template <typename Pred>
  static bool wait_for(Pred pred, std::chrono::milliseconds timeout = 3000ms) {
    const auto end = std::chrono::steady_clock::now() + timeout;
    while (std::chrono::steady_clock::now() < end) {
      if (pred()) return true;
      std::this_thread::sleep_for(10ms);
    }
    return pred();
  }

  RunConfig config_;
  std::filesystem::path log_path_;
};

TEST(LatestValueSlot, KeepsOnlyNewest) {
  LatestValue<int> slot;
  EXPECT_FALSE(slot.take().has_value());
  slot.store(1);
  slot.store(2);
  EXPECT_EQ(slot.peek(), 2);
  EXPECT_EQ(slot.take(), 2);
  EXPECT_FALSE(slot.take().has_value());
}

TEST(DropOldest, DiscardsFromFront) {
  DropOldestQueue<int> q(3);
  for (int i = 1; i <= 5; ++i) q.push(i);
  EXPECT_EQ(q.size(), 3u);
  EXPECT_EQ(q.dropped(), 2u);
  EXPECT_EQ(q.pop(), 3);
  EXPECT_EQ(q.pop(), 4);
  EXPECT_EQ(q.pop(), 5);
  EXPECT_FALSE(q.pop().has_value());
  q.push(9);
  q.clear();
  EXPECT_EQ(q.size(), 0u);
}

TEST(Inbound, ParsesTarget) {
  const auto m = parse_inbound(R"({"type":"target","t":1.5,"device_x":0.1,"device_z":-0.2,"clutch":true})");
  const auto* t = std::get_if<TargetMessage>(&m);
  ASSERT_NE(t, nullptr);
  EXPECT_EQ(t->t, 1.5);
  EXPECT_EQ(t->device_x, 0.1);
  EXPECT_EQ(t->device_z, -0.2);
  EXPECT_TRUE(t->clutch);
}

TEST(Inbound, ParsesPresetCaseInsensitively) {
  const auto m = parse_inbound(R"({"type":"set_preset","name":"p2"})");
  ASSERT_TRUE(std::holds_alternative<SetPresetMessage>(m));
  EXPECT_EQ(std::get<SetPresetMessage>(m).name, "P2");
}

TEST(Inbound, ErrorCodes) {
  auto code = [](const std::string& text) {
    const auto m = parse_inbound(text);
    const auto* e = std::get_if<InboundError>(&m);
    return e ? e->code : std::string("accepted");
  };
  EXPECT_EQ(code("not json"), "malformed");
  EXPECT_EQ(code("[1,2]"), "malformed");
  EXPECT_EQ(code(R"({"t": 1})"), "malformed");
  EXPECT_EQ(code(R"({"type":"jump"})"), "unknown_type");
  EXPECT_EQ(code(R"({"type":"target","t":0,"device_x":0,"device_z":0})"), "invalid_field");
  EXPECT_EQ(code(R"({"type":"target","t":0,"device_x":"0","device_z":0,"clutch":true})"),
            "invalid_field");
  EXPECT_EQ(code(R"({"type":"target","t":0,"device_x":0,"device_z":0,"clutch":1})"),
            "invalid_field");
  EXPECT_EQ(code(R"({"type":"set_preset","name":"P3"})"), "unknown_preset");
  EXPECT_EQ(code(R"({"type":"set_preset"})"), "invalid_field");
}

TEST(Outbound, StateMessageFields) {
  TickRecord r;
  r.t = 0.5;
  r.q = Vec3(1.0, 2.0, 3.0);
  r.beta = 0.1;
  r.betadot = -0.2;
  r.pose = {0.6, 0.1, 0.0};
  r.reference = {0.7, 0.1, 0.0};
  r.u = Vec3(4.0, 5.0, 6.0);
  r.solve_ms = 2.5;
  r.gate = true;
  const Json j = Json::parse(make_state_message(r, "P2"));
  EXPECT_EQ(j["type"], "state");
  EXPECT_EQ(j["t"], 0.5);
  EXPECT_EQ(j["q"], Json::array({1.0, 2.0, 3.0}));
  EXPECT_EQ(j["beta"], 0.1);
  EXPECT_EQ(j["betadot"], -0.2);
  EXPECT_EQ(j["pose"]["x"], 0.6);
  EXPECT_EQ(j["reference"]["x"], 0.7);
  EXPECT_EQ(j["u"][2], 6.0);
  EXPECT_EQ(j["solve_ms"], 2.5);
  EXPECT_EQ(j["preset"], "P2");
  EXPECT_EQ(j["gate"], true);
}

TEST(Outbound, ConfigAndErrorMessages) {
  const Json c = Json::parse(make_config_message(RunConfig{}));
  EXPECT_EQ(c["type"], "config");
  EXPECT_EQ(c["robot"]["L1"], 0.425);
  EXPECT_EQ(c["robot"]["L2"], 0.3922);
  EXPECT_EQ(c["robot"]["L3"], 0.1);
  EXPECT_EQ(c["bounds"]["u_max"][0], 8.0);
  EXPECT_EQ(c["liquid"]["l"], 0.02);
  EXPECT_EQ(c["liquid"]["h"], 0.08);
  EXPECT_EQ(c["control_rate"], 30.0);
  const Json e = Json::parse(make_error_message("session_busy", "busy"));
  EXPECT_EQ(e["type"], "error");
  EXPECT_EQ(e["code"], "session_busy");
  EXPECT_EQ(e["message"], "busy");
}

TEST_F(TeleopTest, SendsConfigThenStreamsState) {
  TeleopService service(config_);
  service.start();
  ASSERT_NE(service.port(), 0);
  Client client(service.port());
  const auto config = client.read();
  ASSERT_TRUE(config);
  EXPECT_EQ((*config)["type"], "config");
  EXPECT_EQ((*config)["robot"]["L1"], 0.425);

  double last_t = -1.0;
  for (int i = 0; i < 10; ++i) {
    const auto m = client.read();
    ASSERT_TRUE(m);
    ASSERT_EQ((*m)["type"], "state");
    EXPECT_EQ((*m)["q"].size(), 3u);
    EXPECT_EQ((*m)["u"].size(), 3u);
    EXPECT_TRUE((*m)["pose"].contains("theta"));
    EXPECT_TRUE((*m)["reference"].contains("z"));
    EXPECT_EQ((*m)["preset"], "P1");
    EXPECT_TRUE((*m)["gate"].is_boolean());
    const double t = (*m)["t"];
    EXPECT_GT(t, last_t);
    last_t = t;
  }
  client.close();
  service.stop();
}

TEST_F(TeleopTest, StreamsAtControlRate) {
  TeleopService service(config_);
  service.start();
  Client client(service.port());
  ASSERT_TRUE(client.read_type("config"));
  const auto start = std::chrono::steady_clock::now();
  int states = 0;
  while (std::chrono::steady_clock::now() - start < 1000ms) {
    const auto m = client.read();
    ASSERT_TRUE(m);
    if ((*m)["type"] == "state") ++states;
  }
  EXPECT_GE(states, 24);
  EXPECT_LE(states, 36);
  service.stop();
}

TEST_F(TeleopTest, PresetSwitchAppliesOnLaterTicks) {
  config_.controller.use_preset("P1");
  TeleopService service(config_);
  service.start();
  Client client(service.port());
  ASSERT_TRUE(client.read_type("config"));
  client.send(Json{{"type", "set_preset"}, {"name", "P2"}});
  bool switched = false;
  for (int i = 0; i < 30 && !switched; ++i) {
    const auto m = client.read_type("state");
    ASSERT_TRUE(m);
    switched = (*m)["preset"] == "P2";
  }
  EXPECT_TRUE(switched);
  EXPECT_EQ(service.preset(), "P2");

  client.send(Json{{"type", "set_preset"}, {"name", "P9"}});
  const auto err = client.read_type("error");
  ASSERT_TRUE(err);
  EXPECT_EQ((*err)["code"], "unknown_preset");
  EXPECT_EQ(service.preset(), "P2");
  service.stop();
}

TEST_F(TeleopTest, MalformedMessageGetsErrorAndSessionSurvives) {
  TeleopService service(config_);
  service.start();
  Client client(service.port());
  ASSERT_TRUE(client.read_type("config"));
  client.send(std::string("{not json"));
  const auto err = client.read_type("error");
  ASSERT_TRUE(err);
  EXPECT_EQ((*err)["code"], "malformed");
  client.send(Json{{"type", "target"}, {"t", 0}, {"device_x", 0}});
  const auto err2 = client.read_type("error");
  ASSERT_TRUE(err2);
  EXPECT_EQ((*err2)["code"], "invalid_field");

  client.send(target(0.0, 0.0, true));
  EXPECT_TRUE(client.read_type("state"));
  EXPECT_TRUE(service.session_active());
  service.stop();
}

TEST_F(TeleopTest, SecondOperatorIsRejected) {
  TeleopService service(config_);
  service.start();
  Client first(service.port());
  ASSERT_TRUE(first.read_type("config"));
  {
    Client second(service.port());
    const auto m = second.read();
    ASSERT_TRUE(m);
    EXPECT_EQ((*m)["type"], "error");
    EXPECT_EQ((*m)["code"], "session_busy");
    EXPECT_FALSE(second.read(1000ms).has_value());
  }
  EXPECT_TRUE(first.read_type("state"));
  EXPECT_TRUE(service.session_active());
  service.stop();
}

TEST_F(TeleopTest, NewOperatorAcceptedAfterDisconnect) {
  TeleopService service(config_);
  service.start();
  {
    Client first(service.port());
    ASSERT_TRUE(first.read_type("config"));
    first.close();
  }
  ASSERT_TRUE(wait_for([&] { return !service.session_active(); }));
  Client second(service.port());
  const auto m = second.read();
  ASSERT_TRUE(m);
  EXPECT_EQ((*m)["type"], "config");
  service.stop();
}

TEST_F(TeleopTest, UnknownPathIsRefused) {
  TeleopService service(config_);
  service.start();
  EXPECT_THROW(Client(service.port(), "/other"), boost::system::system_error);
  service.stop();
}

TEST_F(TeleopTest, DisconnectReleasesClutchAndWritesLog) {
  TeleopService service(config_);
  service.start();
  {
    Client client(service.port());
    ASSERT_TRUE(client.read_type("config"));
    for (int i = 0; i <= 15; ++i) {
      client.send(target(0.01 * i, 0.0, true, i / 30.0));
      ASSERT_TRUE(client.read_type("state"));
    }
    client.close();
  }
  ASSERT_TRUE(wait_for([&] { return !service.session_active(); }));
  const std::size_t at_disconnect = service.ticks();
  ASSERT_TRUE(wait_for([&] { return service.ticks() > at_disconnect + 45; }));

  // Flushed on disconnect, before any shutdown.
  const auto lines = log_lines();
  ASSERT_GT(lines.size(), at_disconnect);
  EXPECT_EQ(lines.front(), kLogHeader);
  service.stop();

  auto field = [](const std::string& line, int col) {
    std::stringstream ss(line);
    std::string f;
    for (int i = 0; i <= col; ++i) std::getline(ss, f, ',');
    return std::stod(f);
  };
  const auto all = log_lines();
  ASSERT_EQ(all.size(), service.ticks() + 1);
  // Released clutch: the reference is the current pose.
  const std::string& last = all.back();
  EXPECT_EQ(field(last, 9), field(last, 12));
  EXPECT_EQ(field(last, 10), field(last, 13));
  // Holding pose over the last second.
  double lo = field(last, 9), hi = lo;
  for (std::size_t i = all.size() - 30; i < all.size(); ++i) {
    lo = std::min(lo, field(all[i], 9));
    hi = std::max(hi, field(all[i], 9));
  }
  EXPECT_LT(hi - lo, 5e-3);
}

TEST_F(TeleopTest, StalledClientDoesNotSlowTheLoop) {
  config_.controller.use_preset("P2");
  TeleopOptions options;
  options.frame_queue = 4;
  TeleopService service(config_, options);
  service.start();
  Client client(service.port());
  ASSERT_TRUE(client.read_type("config"));
  const std::size_t before = service.ticks();
  std::this_thread::sleep_for(1000ms);
  const std::size_t during = service.ticks() - before;
  EXPECT_GE(during, 27u);
  EXPECT_LE(during, 33u);
  // The client catches up with at most the queued frames plus those in flight.
  EXPECT_TRUE(client.read_type("state"));
  service.stop();
}

TEST_F(TeleopTest, ServerClockStampsStates) {
  TeleopService service(config_);
  service.start();
  Client client(service.port());
  ASSERT_TRUE(client.read_type("config"));
  client.send(target(0.0, 0.0, true, 5000.0));
  for (int i = 0; i < 5; ++i) {
    const auto m = client.read_type("state");
    ASSERT_TRUE(m);
    const double t = (*m)["t"];
    EXPECT_LT(t, 100.0);
    EXPECT_NEAR(t * 30.0, std::round(t * 30.0), 1e-9);
  }
  service.stop();
}

TEST_F(TeleopTest, PortInUseIsReported) {
  TeleopService first(config_);
  first.start();
  RunConfig again = config_;
  again.port = first.port();
  again.session_log = log_path_.string() + ".second";
  TeleopService second(again);
  EXPECT_THROW(second.start(), TeleopError);
  first.stop();
}

TEST_F(TeleopTest, StopIsIdempotentAndFlushes) {
  TeleopService service(config_);
  service.start();
  ASSERT_TRUE(wait_for([&] { return service.ticks() >= 5; }));
  service.stop();
  service.stop();
  EXPECT_EQ(log_lines().size(), service.ticks() + 1);
}

}  // namespace
}  // namespace telemanip
