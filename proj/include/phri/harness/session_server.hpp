#pragma once

// Interactive session over newline-delimited JSON. SessionController owns the
// learning session and maps client messages to replies; SessionServer is the
// TCP transport, streaming a frame every tick while execution runs.
//
// Client messages are single-key objects, optionally with an "id" echoed back:
//   {"apply_correction": {"torque": [..], "waypoint_index": 3}}
//   {"reset": {}}   {"set_mode": "adaptive"}   {"set_speed": {"ticks_per_waypoint": 2}}
//   {"pause": {}}   {"resume": {}}   {"get_frame": {}}   {"get_record": {"episode": 0, "seed": 0}}

#include <boost/asio.hpp>
#include <json.hpp>

#include <deque>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "phri/harness/config.hpp"
#include "phri/harness/experiment.hpp"
#include "phri/harness/io.hpp"
#include "phri/session.hpp"

namespace phri::harness {

inline constexpr int kProtocolVersion = 1;

class SessionController {
 public:
  SessionController(ExperimentConfig cfg, std::optional<RationalityModel> model, std::size_t task_index = 0)
      : cfg_(std::move(cfg)), model_(std::move(model)) {
    if (cfg_.experiment.tasks.empty()) throw ConfigurationError("the session server needs at least one task");
    if (task_index >= cfg_.experiment.tasks.size()) throw ConfigurationError("task index out of range");
    task_ = cfg_.experiment.tasks[task_index];
    LearnerSettings settings = cfg_.learner;
    if (!model_) settings.strategy = Strategy::kFixed;
    ticks_per_waypoint_ = cfg_.server.ticks_per_waypoint;
    session_.emplace(cfg_.scene, settings, task_.theta0, model_);
    reference_ = plan(cfg_.scene.features, cfg_.scene.model, task_target_theta(cfg_.scene.features, task_),
                      cfg_.scene.start, cfg_.scene.goal, cfg_.scene.horizon, cfg_.scene.dt, cfg_.scene.planner)
                     .trajectory;
  }

  const LearningSession& session() const { return *session_; }
  const TaskSpec& task() const { return task_; }
  bool paused() const { return paused_; }
  bool running() const { return !paused_ && !session_->finished(); }
  int ticks_per_waypoint() const { return ticks_per_waypoint_; }

  void pause() { paused_ = true; }

  /// Advances the execution clock by one tick; true when the index moved.
  bool tick() {
    if (!running()) return false;
    if (++tick_count_ < ticks_per_waypoint_) return false;
    tick_count_ = 0;
    session_->advance(1);
    return true;
  }

  json hello() const {
    return json{{"type", "hello"}, {"protocol", kProtocolVersion}, {"task", task_.name},
                {"feature_names", known_names()}, {"tick_ms", cfg_.server.tick_ms}};
  }

  json frame() {
    const Scene& sc = session_->scene();
    const Trajectory& traj = session_->trajectory();
    const int idx = session_->current_index();
    json waypoints = json::array();
    json ee_path = json::array();
    for (int t = 0; t < traj.size(); ++t) {
      waypoints.push_back(detail::from_vec(traj.waypoint(t)));
      const Point2 ee = forward_kinematics(sc.model, traj.waypoint(t)).ee();
      ee_path.push_back({ee.x(), ee.y()});
    }
    const JointConfig q = traj.waypoint(idx);
    const ArmPose pose = forward_kinematics(sc.model, q);
    json points = json::array();
    for (const auto& p : pose.points) points.push_back({p.x(), p.y()});
    const Mat jac = ee_jacobian(sc.model, q);
    json jrows = json::array();
    for (Eigen::Index r = 0; r < jac.rows(); ++r) jrows.push_back(detail::from_vec(jac.row(r).transpose()));
    json deformed = json(nullptr);
    if (last_deformed_) {
      deformed = json::array();
      for (int t = 0; t < last_deformed_->size(); ++t) deformed.push_back(detail::from_vec(last_deformed_->waypoint(t)));
    }
    json history = json::array();
    for (const auto& th : session_->theta_trace()) history.push_back(detail::from_vec(th));
    json readouts = json::array();
    if (!session_->audit().empty()) {
      for (const auto& f : session_->audit().back().features) readouts.push_back(to_json(f));
    }
    const auto& fs = sc.features;
    return json{{"type", "frame"},
                {"sequence", frame_sequence_++},
                {"index", idx},
                {"horizon", traj.horizon()},
                {"finished", session_->finished()},
                {"paused", paused_},
                {"mode", to_string(session_->settings().strategy)},
                {"waypoints", waypoints},
                {"ee_path", ee_path},
                {"deformed", deformed},
                {"pose", {{"points", points}, {"ee_angle", pose.ee_angle}}},
                {"jacobian", jrows},
                {"theta", detail::from_vec(session_->theta())},
                {"theta_history", history},
                {"features", readouts},
                {"scene",
                 {{"feature_names", known_names()},
                  {"table_height", fs.table_height()},
                  {"human_position", {fs.human_position().x(), fs.human_position().y()}},
                  {"upright_angle", fs.upright_angle()}}}};
  }

  /// The session so far as a trial record, scored against the task's plan.
  TrialRecord record(int episode = 0, std::uint64_t seed = 0) const {
    TrialRecord r;
    r.task = task_.name;
    r.relevance = task_.relevance;
    r.strategy = session_->settings().strategy;
    r.episode = episode;
    r.seed = seed;
    r.corrections = session_->audit();
    r.theta_trace = session_->theta_trace();
    r.path_length = session_->theta_path_length();
    for (const auto& c : r.corrections) {
      if (!c.error.empty()) {
        r.status = "quarantined";
        r.error = "correction " + std::to_string(c.sequence) + " failed: " + c.error;
        return r;
      }
    }
    r.regret = feature_regret(cfg_.scene, reference_, session_->theta());
    return r;
  }

  /// Replies to one raw message line. Every reply carries the message id if
  /// one was given; malformed input yields an error reply and no state change.
  std::vector<json> handle_line(const std::string& line) {
    json msg;
    try {
      msg = json::parse(line);
    } catch (const json::parse_error& e) {
      return {error_reply("", json(nullptr), std::string("invalid JSON: ") + e.what())};
    }
    return handle(msg);
  }

  std::vector<json> handle(const json& msg) {
    json id = json(nullptr);
    if (!msg.is_object()) return {error_reply("", id, "message must be a JSON object")};
    if (msg.contains("id")) id = msg["id"];
    std::string op;
    for (auto it = msg.begin(); it != msg.end(); ++it) {
      if (it.key() == "id") continue;
      if (!op.empty()) return {error_reply("", id, "message must name exactly one operation")};
      op = it.key();
    }
    if (op.empty()) return {error_reply("", id, "message names no operation")};
    const json& body = msg[op];
    try {
      if (op == "apply_correction") return apply_correction(body, id);
      if (op == "reset") {
        session_->reset();
        last_deformed_.reset();
        tick_count_ = 0;
        return {ack(op, id), frame()};
      }
      if (op == "set_mode") {
        if (!body.is_string()) throw ConfigurationError("set_mode expects \"adaptive\" or \"fixed\"");
        session_->set_strategy(strategy_from_string(body.get<std::string>()));
        return {ack(op, id), frame()};
      }
      if (op == "set_speed") {
        int ticks = 0;
        if (body.is_number_integer()) {
          ticks = body.get<int>();
        } else if (body.is_object() && body.contains("ticks_per_waypoint") && body["ticks_per_waypoint"].is_number_integer()) {
          ticks = body["ticks_per_waypoint"].get<int>();
        }
        if (ticks < 1) throw ConfigurationError("set_speed expects a positive integer ticks_per_waypoint");
        ticks_per_waypoint_ = ticks;
        tick_count_ = 0;
        return {ack(op, id)};
      }
      if (op == "pause") {
        paused_ = true;
        return {ack(op, id), frame()};
      }
      if (op == "resume") {
        paused_ = false;
        return {ack(op, id), frame()};
      }
      if (op == "get_frame") return {frame()};
      if (op == "get_record") {
        int episode = 0;
        std::uint64_t seed = 0;
        if (body.is_object()) {
          episode = body.value("episode", 0);
          seed = body.value("seed", std::uint64_t{0});
        }
        json r{{"type", "record"}, {"record", to_json(record(episode, seed))}};
        if (!id.is_null()) r["id"] = id;
        return {r};
      }
      return {error_reply(op, id, "unknown operation '" + op + "'")};
    } catch (const json::exception& e) {
      return {error_reply(op, id, std::string("malformed message: ") + e.what())};
    } catch (const Error& e) {
      return {error_reply(op, id, e.what())};
    }
  }

 private:
  std::vector<json> apply_correction(const json& body, const json& id) {
    if (!body.is_object() || !body.contains("torque")) {
      throw ConfigurationError("apply_correction expects {\"torque\": [..], \"waypoint_index\": i}");
    }
    Correction u;
    u.torque = detail::to_vec(body["torque"], "torque");
    u.waypoint_index = body.contains("waypoint_index") ? body["waypoint_index"].get<int>() : session_->current_index();
    const int dof = session_->scene().model.n_links();
    if (u.torque.size() != dof) {
      throw ConfigurationError("torque must have " + std::to_string(dof) + " entries, got " +
                               std::to_string(u.torque.size()));
    }
    if (!u.torque.allFinite()) throw DomainError("torque must be finite");
    session_->deformer().check_index(u.waypoint_index);
    if (u.waypoint_index < session_->current_index()) {
      throw CorrectionPlacementError("waypoint " + std::to_string(u.waypoint_index) + " has already been executed (now at " +
                                     std::to_string(session_->current_index()) + ")");
    }
    last_deformed_ = session_->deformer().deform(session_->trajectory(), u);
    session_->advance(u.waypoint_index - session_->current_index());
    const AuditRecord& rec = session_->process_correction(u);
    json reply{{"type", "correction"}, {"audit", to_json(rec)}};
    if (!id.is_null()) reply["id"] = id;
    return {reply, frame()};
  }

  json ack(const std::string& op, const json& id) const {
    json j{{"type", "ack"}, {"op", op}};
    if (!id.is_null()) j["id"] = id;
    return j;
  }

  static json error_reply(const std::string& op, const json& id, const std::string& message) {
    json j{{"type", "error"}, {"op", op}, {"message", message}};
    if (!id.is_null()) j["id"] = id;
    return j;
  }

  json known_names() const {
    json names = json::array();
    const auto& fs = session_->scene().features;
    for (int i : fs.known_indices()) names.push_back(fs.spec(i).name);
    return names;
  }

  ExperimentConfig cfg_;
  std::optional<RationalityModel> model_;
  TaskSpec task_;
  std::optional<LearningSession> session_;
  Trajectory reference_;
  std::optional<Trajectory> last_deformed_;
  int ticks_per_waypoint_ = 5;
  int tick_count_ = 0;
  bool paused_ = false;
  std::uint64_t frame_sequence_ = 0;
};

/// TCP transport. One client at a time drives the single session; a client
/// that connects while another is attached is refused. Disconnecting pauses
/// the session and the next client resumes it with {"resume": {}}.
class SessionServer {
 public:
  using tcp = boost::asio::ip::tcp;

  SessionServer(boost::asio::io_context& io, SessionController& controller, unsigned short port,
                const std::string& address = "127.0.0.1")
      : io_(io), controller_(controller), acceptor_(io, tcp::endpoint(boost::asio::ip::make_address(address), port)),
        timer_(io) {}

  unsigned short port() const { return acceptor_.local_endpoint().port(); }

  void start(int tick_ms) {
    tick_ms_ = tick_ms;
    accept();
    schedule_tick();
  }

  void stop() {
    stopped_ = true;
    boost::system::error_code ec;
    acceptor_.close(ec);
    timer_.cancel();
    if (client_) client_->close();
  }

 private:
  class Client : public std::enable_shared_from_this<Client> {
   public:
    Client(tcp::socket socket, SessionServer& server) : socket_(std::move(socket)), server_(server) {}

    void start() { read(); }

    void send(const json& j) {
      const bool idle = queue_.empty();
      queue_.push_back(j.dump() + "\n");
      if (idle) write();
    }

    void close() {
      boost::system::error_code ec;
      socket_.shutdown(tcp::socket::shutdown_both, ec);
      socket_.close(ec);
    }

   private:
    void read() {
      auto self = shared_from_this();
      boost::asio::async_read_until(socket_, buffer_, '\n', [this, self](boost::system::error_code ec, std::size_t n) {
        if (ec) {
          server_.detach(this);
          return;
        }
        std::string line(boost::asio::buffers_begin(buffer_.data()), boost::asio::buffers_begin(buffer_.data()) + n);
        buffer_.consume(n);
        while (!line.empty() && (line.back() == '\n' || line.back() == '\r')) line.pop_back();
        if (!line.empty()) {
          for (const auto& reply : server_.controller_.handle_line(line)) send(reply);
        }
        read();
      });
    }

    void write() {
      auto self = shared_from_this();
      boost::asio::async_write(socket_, boost::asio::buffer(queue_.front()),
                               [this, self](boost::system::error_code ec, std::size_t) {
                                 if (ec) {
                                   server_.detach(this);
                                   return;
                                 }
                                 queue_.pop_front();
                                 if (!queue_.empty()) write();
                               });
    }

    tcp::socket socket_;
    SessionServer& server_;
    boost::asio::streambuf buffer_;
    std::deque<std::string> queue_;
  };

  void accept() {
    acceptor_.async_accept([this](boost::system::error_code ec, tcp::socket socket) {
      if (stopped_) return;
      if (!ec) {
        if (client_) {
          const std::string refusal =
              json{{"type", "error"}, {"op", ""}, {"message", "another client is attached to this session"}}.dump() + "\n";
          boost::system::error_code wec;
          boost::asio::write(socket, boost::asio::buffer(refusal), wec);
          socket.close(wec);
        } else {
          client_ = std::make_shared<Client>(std::move(socket), *this);
          client_->start();
          client_->send(controller_.hello());
          client_->send(controller_.frame());
        }
      }
      accept();
    });
  }

  void detach(Client* c) {
    if (client_.get() != c) return;
    client_->close();
    client_.reset();
    controller_.pause();
  }

  void schedule_tick() {
    timer_.expires_after(std::chrono::milliseconds(tick_ms_));
    timer_.async_wait([this](boost::system::error_code ec) {
      if (ec || stopped_) return;
      if (client_ && controller_.running()) {
        controller_.tick();
        client_->send(controller_.frame());
      }
      schedule_tick();
    });
  }

  boost::asio::io_context& io_;
  SessionController& controller_;
  tcp::acceptor acceptor_;
  boost::asio::steady_timer timer_;
  std::shared_ptr<Client> client_;
  int tick_ms_ = 100;
  bool stopped_ = false;
};

}  // namespace phri::harness
