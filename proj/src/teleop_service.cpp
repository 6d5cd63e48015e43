#include "telemanip/teleop_service.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <vector>

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>

#include "json.hpp"

namespace telemanip {

namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
namespace asio = boost::asio;
using tcp = asio::ip::tcp;
using Json = nlohmann::ordered_json;

namespace {

constexpr const char* kEndpoint = "/teleop";

Json vec_json(const Vec3& v) { return Json::array({v[0], v[1], v[2]}); }

Json pose_json(const Pose2D& p) { return {{"x", p.x}, {"z", p.z}, {"theta", p.theta}}; }

InboundError invalid(const std::string& field, const std::string& expected) {
  return {"invalid_field", "field '" + field + "' must be " + expected};
}

std::string upper(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
  return s;
}

}  // namespace

InboundMessage parse_inbound(const std::string& text) {
  Json doc;
  try {
    doc = Json::parse(text);
  } catch (const Json::exception& e) {
    return InboundError{"malformed", std::string("invalid JSON: ") + e.what()};
  }
  if (!doc.is_object()) return InboundError{"malformed", "expected a JSON object"};
  const auto type = doc.find("type");
  if (type == doc.end() || !type->is_string()) {
    return InboundError{"malformed", "missing string field 'type'"};
  }

  const std::string kind = type->get<std::string>();
  if (kind == "target") {
    TargetMessage m;
    for (const auto& [key, slot] : {std::pair{"t", &m.t}, std::pair{"device_x", &m.device_x},
                                    std::pair{"device_z", &m.device_z}}) {
      const auto it = doc.find(key);
      if (it == doc.end() || !it->is_number()) return invalid(key, "a number");
      *slot = it->get<double>();
      if (!std::isfinite(*slot)) return invalid(key, "finite");
    }
    const auto clutch = doc.find("clutch");
    if (clutch == doc.end() || !clutch->is_boolean()) return invalid("clutch", "true or false");
    m.clutch = clutch->get<bool>();
    return m;
  }
  if (kind == "set_preset") {
    const auto name = doc.find("name");
    if (name == doc.end() || !name->is_string()) return invalid("name", "a string");
    const std::string key = upper(name->get<std::string>());
    if (key != "P1" && key != "P2") {
      return InboundError{"unknown_preset", "unknown preset '" + name->get<std::string>() + "'"};
    }
    return SetPresetMessage{key};
  }
  return InboundError{"unknown_type", "unknown message type '" + kind + "'"};
}

std::string make_state_message(const TickRecord& r, const std::string& preset) {
  const Json msg = {
      {"type", "state"},        {"t", r.t},
      {"q", vec_json(r.q)},     {"beta", r.beta},
      {"betadot", r.betadot},   {"pose", pose_json(r.pose)},
      {"reference", pose_json(r.reference)},
      {"u", vec_json(r.u)},     {"solve_ms", r.solve_ms},
      {"preset", preset},       {"gate", r.gate},
  };
  return msg.dump();
}

std::string make_config_message(const RunConfig& config) {
  const ControllerConfig& c = config.controller;
  const Json msg = {
      {"type", "config"},
      {"robot", {{"L1", c.robot.L1}, {"L2", c.robot.L2}, {"L3", c.robot.L3}}},
      {"bounds",
       {{"q_min", vec_json(c.bounds.q_min)},
        {"q_max", vec_json(c.bounds.q_max)},
        {"qdot_min", vec_json(c.bounds.qdot_min)},
        {"qdot_max", vec_json(c.bounds.qdot_max)},
        {"u_min", vec_json(c.bounds.u_min)},
        {"u_max", vec_json(c.bounds.u_max)}}},
      {"liquid",
       {{"l", c.liquid.l},
        {"h", c.liquid.h},
        {"m", c.liquid.m},
        {"d", c.liquid.d},
        {"g", c.liquid.g}}},
      {"control_rate", config.sim.control_rate},
      {"horizon", {{"N", c.horizon.N}, {"dt", c.horizon.dt}}},
      {"q_initial", vec_json(config.sim.q_initial)},
      {"preset", c.preset_name},
  };
  return msg.dump();
}

std::string make_error_message(const std::string& code, const std::string& message) {
  return Json{{"type", "error"}, {"code", code}, {"message", message}}.dump();
}

// Network side. Everything below runs on the io thread except notify().
struct TeleopService::Network {
  class Session;

  explicit Network(TeleopService& s) : service(s), acceptor(ioc), shutdown_timer(ioc) {}

  void accept();
  void notify();
  void shutdown();
  void on_target(const TargetMessage& m);
  void on_session_end(Session* s, bool owner);
  bool claim(const std::shared_ptr<Session>& s);

  TeleopService& service;
  asio::io_context ioc;
  tcp::acceptor acceptor;
  asio::steady_timer shutdown_timer;
  std::weak_ptr<Session> owner;
  std::vector<std::weak_ptr<Session>> sessions;
  TargetMessage last_target;
  bool shutting_down = false;
};

class TeleopService::Network::Session : public std::enable_shared_from_this<Session> {
 public:
  Session(tcp::socket socket, Network& net) : ws_(std::move(socket)), net_(net) {}

  void run() {
    beast::get_lowest_layer(ws_).expires_after(std::chrono::seconds(10));
    http::async_read(ws_.next_layer(), buffer_, request_,
                     beast::bind_front_handler(&Session::on_request, shared_from_this()));
  }

  void pump() {
    if (!open_ || writing_ || close_sent_) return;
    if (!control_.empty()) {
      out_ = std::move(control_.front());
      control_.pop_front();
    } else if (auto frame = owner_ && !closing_ ? net_.service.frames_.pop() : std::nullopt) {
      out_ = std::move(*frame);
    } else {
      if (closing_) close();
      return;
    }
    writing_ = true;
    ws_.text(true);
    ws_.async_write(asio::buffer(out_),
                    beast::bind_front_handler(&Session::on_write, shared_from_this()));
  }

  void begin_shutdown() {
    closing_ = true;
    if (!open_) {
      force_close();
      return;
    }
    pump();
  }

  void force_close() {
    beast::error_code ec;
    beast::get_lowest_layer(ws_).socket().shutdown(tcp::socket::shutdown_both, ec);
    beast::get_lowest_layer(ws_).socket().close(ec);
  }

 private:
  void on_request(beast::error_code ec, std::size_t) {
    if (ec) return finish();
    if (!websocket::is_upgrade(request_) || request_.target() != kEndpoint) {
      auto res = std::make_shared<http::response<http::string_body>>(http::status::not_found,
                                                                      request_.version());
      res->set(http::field::content_type, "text/plain");
      res->body() = "websocket endpoint is " + std::string(kEndpoint) + "\n";
      res->prepare_payload();
      res->keep_alive(false);
      http::async_write(ws_.next_layer(), *res,
                        [self = shared_from_this(), res](beast::error_code, std::size_t) {
                          self->force_close();
                          self->finish();
                        });
      return;
    }
    beast::get_lowest_layer(ws_).expires_never();
    ws_.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
    ws_.async_accept(request_,
                     beast::bind_front_handler(&Session::on_accept, shared_from_this()));
  }

  void on_accept(beast::error_code ec) {
    if (ec) return finish();
    open_ = true;
    if (net_.shutting_down) {
      closing_ = true;
    } else if (net_.claim(shared_from_this())) {
      owner_ = true;
      control_.push_back(make_config_message(net_.service.config_));
      read();
    } else {
      control_.push_back(
          make_error_message("session_busy", "another operator session is active"));
      closing_ = true;
    }
    pump();
  }

  void read() {
    ws_.async_read(buffer_, beast::bind_front_handler(&Session::on_read, shared_from_this()));
  }

  void on_read(beast::error_code ec, std::size_t) {
    if (ec) return finish();
    const std::string text = beast::buffers_to_string(buffer_.data());
    buffer_.consume(buffer_.size());
    const InboundMessage msg = parse_inbound(text);
    if (const auto* target = std::get_if<TargetMessage>(&msg)) {
      net_.on_target(*target);
    } else if (const auto* set = std::get_if<SetPresetMessage>(&msg)) {
      net_.service.pending_preset_.store(set->name);
    } else {
      const auto& err = std::get<InboundError>(msg);
      control_.push_back(make_error_message(err.code, err.message));
      pump();
    }
    read();
  }

  void on_write(beast::error_code ec, std::size_t) {
    writing_ = false;
    if (ec) return finish();
    pump();
  }

  void close() {
    if (close_sent_) return;
    close_sent_ = true;
    ws_.async_close(websocket::close_code::normal,
                    [self = shared_from_this()](beast::error_code) {
                      self->force_close();
                      self->finish();
                    });
  }

  void finish() {
    if (finished_) return;
    finished_ = true;
    open_ = false;
    net_.on_session_end(this, owner_);
  }

  websocket::stream<beast::tcp_stream> ws_;
  Network& net_;
  beast::flat_buffer buffer_;
  http::request<http::string_body> request_;
  std::deque<std::string> control_;
  std::string out_;
  bool open_ = false;
  bool owner_ = false;
  bool writing_ = false;
  bool closing_ = false;
  bool close_sent_ = false;
  bool finished_ = false;
};

void TeleopService::Network::accept() {
  acceptor.async_accept(ioc, [this](beast::error_code ec, tcp::socket socket) {
    if (ec || shutting_down) return;
    auto session = std::make_shared<Session>(std::move(socket), *this);
    std::erase_if(sessions, [](const auto& w) { return w.expired(); });
    sessions.push_back(session);
    session->run();
    accept();
  });
}

void TeleopService::Network::notify() {
  asio::post(ioc, [this] {
    if (auto s = owner.lock()) s->pump();
  });
}

bool TeleopService::Network::claim(const std::shared_ptr<Session>& s) {
  if (!owner.expired()) return false;
  owner = s;
  service.frames_.clear();
  service.session_active_.store(true);
  return true;
}

void TeleopService::Network::on_target(const TargetMessage& m) {
  last_target = m;
  service.latest_target_.store(m);
}

void TeleopService::Network::on_session_end(Session* s, bool is_owner) {
  if (is_owner && owner.lock().get() == s) {
    owner.reset();
    service.session_active_.store(false);
    TargetMessage release = last_target;
    release.clutch = false;
    service.latest_target_.store(release);
    service.flush_requested_.store(true);
  }
  if (shutting_down) {
    const bool any_left = std::any_of(sessions.begin(), sessions.end(), [s](const auto& w) {
      const auto p = w.lock();
      return p && p.get() != s;
    });
    if (!any_left) shutdown_timer.cancel();
  }
}

void TeleopService::Network::shutdown() {
  shutting_down = true;
  beast::error_code ec;
  acceptor.close(ec);
  std::vector<std::shared_ptr<Session>> live;
  for (const auto& w : sessions) {
    if (auto p = w.lock()) live.push_back(std::move(p));
  }
  if (live.empty()) return;
  for (const auto& s : live) s->begin_shutdown();
  shutdown_timer.expires_after(std::chrono::milliseconds(500));
  shutdown_timer.async_wait([this](beast::error_code) {
    for (const auto& w : sessions) {
      if (auto p = w.lock()) p->force_close();
    }
  });
}

TeleopService::TeleopService(RunConfig config, TeleopOptions options)
    : config_(std::move(config)),
      options_(std::move(options)),
      frames_(options_.frame_queue),
      preset_(config_.controller.preset_name) {}

TeleopService::~TeleopService() { stop(); }

std::string TeleopService::preset() const {
  std::lock_guard lock(preset_mutex_);
  return preset_;
}

void TeleopService::start() {
  if (started_) return;
  net_ = std::make_unique<Network>(*this);
  try {
    const tcp::endpoint endpoint(asio::ip::make_address(options_.address),
                                 static_cast<unsigned short>(config_.port));
    net_->acceptor.open(endpoint.protocol());
    net_->acceptor.set_option(asio::socket_base::reuse_address(true));
    net_->acceptor.bind(endpoint);
    net_->acceptor.listen(asio::socket_base::max_listen_connections);
    port_ = net_->acceptor.local_endpoint().port();
  } catch (const boost::system::system_error& e) {
    net_.reset();
    throw TeleopError("cannot listen on " + options_.address + ":" +
                      std::to_string(config_.port) + ": " + e.code().message());
  }

  log_.open(config_.session_log, std::ios::trunc);
  if (!log_) {
    net_.reset();
    throw TeleopError("cannot open session log " + config_.session_log);
  }
  log_ << kLogHeader << '\n';

  started_ = true;
  running_.store(true);
  net_->accept();
  io_thread_ = std::thread([this] { net_->ioc.run(); });
  control_thread_ = std::thread([this] { control_loop(); });
}

void TeleopService::stop() {
  if (!started_) return;
  started_ = false;
  running_.store(false);
  if (control_thread_.joinable()) control_thread_.join();
  asio::post(net_->ioc, [n = net_.get()] { n->shutdown(); });
  if (io_thread_.joinable()) io_thread_.join();
  net_.reset();
  log_.flush();
  log_.close();
}

void TeleopService::control_loop() {
  using clock = std::chrono::steady_clock;
  ClosedLoop loop(config_.controller, config_.sim);
  const auto period = std::chrono::duration_cast<clock::duration>(
      std::chrono::duration<double>(config_.sim.period()));

  OperatorSample sample;
  auto deadline = clock::now();
  while (running_.load()) {
    if (auto name = pending_preset_.take()) {
      loop.set_weights(*name, telemanip::preset(*name));
      std::lock_guard lock(preset_mutex_);
      preset_ = *name;
    }
    if (auto target = latest_target_.take()) {
      sample.device_x = target->device_x;
      sample.device_z = target->device_z;
      sample.clutch = target->clutch;
    }
    sample.t = static_cast<double>(loop.tick()) * config_.sim.period();

    const TickRecord rec = loop.step(sample);
    write_log_row(log_, rec);
    if (flush_requested_.exchange(false)) log_.flush();
    if (session_active_.load()) {
      frames_.push(make_state_message(rec, loop.controller().preset_name));
      net_->notify();
    }
    ticks_.fetch_add(1);

    deadline += period;
    const auto now = clock::now();
    if (now > deadline + period) deadline = now;
    std::this_thread::sleep_until(deadline);
  }
  log_.flush();
}

}  // namespace telemanip
