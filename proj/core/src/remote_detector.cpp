#include <condition_variable>
#include <mutex>

#include <nlohmann/json.hpp>

#include "streetside/detection.hpp"
#include "streetside/error.hpp"

// Last: <resolv.h> defines _res as a macro.
#include <httplib.h>

namespace streetside::detection {

struct RemoteDetector::Impl {
  Options opts;
  std::mutex mu;
  std::condition_variable cv;
  unsigned in_flight = 0;

  httplib::Client make_client() const {
    httplib::Client cli(opts.base_url);
    const auto secs = std::chrono::duration_cast<std::chrono::seconds>(opts.timeout);
    const auto usecs =
        std::chrono::duration_cast<std::chrono::microseconds>(opts.timeout - secs);
    cli.set_connection_timeout(secs.count(), usecs.count());
    cli.set_read_timeout(secs.count(), usecs.count());
    cli.set_write_timeout(secs.count(), usecs.count());
    return cli;
  }
};

RemoteDetector::RemoteDetector(Options opts) : impl_(std::make_unique<Impl>()) {
  if (opts.max_in_flight == 0) opts.max_in_flight = 1;
  impl_->opts = std::move(opts);
}

RemoteDetector::~RemoteDetector() = default;

std::vector<Detection> RemoteDetector::detect(const Image& image, const ViewContext&) {
  const auto png = encode_png(image);
  {
    std::unique_lock lock(impl_->mu);
    impl_->cv.wait(lock, [&] { return impl_->in_flight < impl_->opts.max_in_flight; });
    ++impl_->in_flight;
  }
  struct Release {
    Impl* impl;
    ~Release() {
      {
        std::lock_guard lock(impl->mu);
        --impl->in_flight;
      }
      impl->cv.notify_one();
    }
  } release{impl_.get()};

  auto cli = impl_->make_client();
  const auto res = cli.Post("/v1/detect", reinterpret_cast<const char*>(png.data()), png.size(),
                            "image/png");
  if (!res) {
    throw Error(Errc::kDetectorUnavailable,
                "detector unreachable at " + impl_->opts.base_url + ": " +
                    httplib::to_string(res.error()));
  }
  if (res->status != 200) {
    throw Error(Errc::kDetectorProtocol,
                "detector returned HTTP " + std::to_string(res->status) + ": " + res->body);
  }
  return parse_detect_response(res->body, image.width(), image.height());
}

bool RemoteDetector::healthy() {
  auto cli = impl_->make_client();
  const auto res = cli.Get("/v1/health");
  if (!res || res->status != 200) return false;
  try {
    const auto j = nlohmann::json::parse(res->body);
    return j.value("status", "") == "ok";
  } catch (const nlohmann::json::exception&) {
    return false;
  }
}

}  // namespace streetside::detection
