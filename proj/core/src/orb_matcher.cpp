#include <algorithm>

#include <opencv2/core.hpp>
#include <opencv2/features2d.hpp>
#include <opencv2/imgproc.hpp>

#include "streetside/error.hpp"
#include "streetside/mvg.hpp"

namespace streetside::mvg {
namespace {

cv::Mat to_gray(const Image& img) {
  const cv::Mat rgb(img.height(), img.width(), CV_8UC3, const_cast<std::uint8_t*>(img.bytes().data()));
  cv::Mat gray;
  cv::cvtColor(rgb, gray, cv::COLOR_RGB2GRAY);
  return gray;
}

// Best match per query row that passes the ratio test, or -1.
std::vector<int> ratio_matches(const cv::Mat& query, const cv::Mat& train, double ratio) {
  std::vector<int> best(query.rows, -1);
  if (query.empty() || train.rows < 2) return best;
  cv::BFMatcher bf(cv::NORM_HAMMING, false);
  std::vector<std::vector<cv::DMatch>> knn;
  bf.knnMatch(query, train, knn, 2);
  for (const auto& pair : knn) {
    if (pair.size() < 2) continue;
    if (pair[0].distance < ratio * pair[1].distance) best[pair[0].queryIdx] = pair[0].trainIdx;
  }
  return best;
}

}  // namespace

std::vector<FeatureMatch> OrbMatcher::match(const Image& a, const detection::ViewContext&,
                                            const Image& b, const detection::ViewContext&) {
  if (a.empty() || b.empty()) throw Error(Errc::kInvalidImage, "cannot match an empty image");
  auto orb = cv::ORB::create(opts_.max_features);
  std::vector<cv::KeyPoint> kp_a, kp_b;
  cv::Mat desc_a, desc_b;
  orb->detectAndCompute(to_gray(a), cv::noArray(), kp_a, desc_a);
  orb->detectAndCompute(to_gray(b), cv::noArray(), kp_b, desc_b);

  std::vector<FeatureMatch> out;
  if (!desc_a.empty() && !desc_b.empty()) {
    const auto forward = ratio_matches(desc_a, desc_b, opts_.ratio);
    std::vector<int> backward;
    if (opts_.cross_check) backward = ratio_matches(desc_b, desc_a, opts_.ratio);
    for (std::size_t i = 0; i < forward.size(); ++i) {
      const int j = forward[i];
      if (j < 0) continue;
      if (opts_.cross_check && backward[j] != static_cast<int>(i)) continue;
      // OpenCV places pixel centers at integers; shift to continuous coordinates.
      out.push_back({{kp_a[i].pt.x + 0.5, kp_a[i].pt.y + 0.5},
                     {kp_b[j].pt.x + 0.5, kp_b[j].pt.y + 0.5}});
    }
  }
  if (out.size() < 5) {
    throw Error(Errc::kInsufficientFeatures,
                "only " + std::to_string(out.size()) + " feature matches (need 5)");
  }
  return out;
}

}  // namespace streetside::mvg
