#ifndef GMA_VISUAL_GRAPH_HPP
#define GMA_VISUAL_GRAPH_HPP

#include <algorithm>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "gma/tensor.hpp"

namespace gma {

struct BoundingBox {
  double x1 = 0, y1 = 0, x2 = 0, y2 = 0;

  double area() const { return std::max(0.0, x2 - x1) * std::max(0.0, y2 - y1); }
};

/// Intersection over union. Degenerate boxes contribute zero area; an empty
/// union yields 0.
inline double iou(const BoundingBox& a, const BoundingBox& b) {
  if (a.x2 < a.x1 || a.y2 < a.y1 || b.x2 < b.x1 || b.y2 < b.y1)
    throw std::invalid_argument("iou: box with negative extent");
  double ix = std::max(0.0, std::min(a.x2, b.x2) - std::max(a.x1, b.x1));
  double iy = std::max(0.0, std::min(a.y2, b.y2) - std::max(a.y1, b.y1));
  double inter = ix * iy;
  double uni = a.area() + b.area() - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

/// One image's worth of detector output: boxes plus fixed-length RoI
/// features, ingested from file (the detector itself is out of scope here).
struct DetectionSet {
  std::string image_id;
  double image_width = 0, image_height = 0;
  std::vector<BoundingBox> boxes;
  std::vector<std::vector<double>> features;  // all rows same length d_roi
};

inline DetectionSet detection_set_from_json(const nlohmann::json& j) {
  DetectionSet d;
  d.image_id = j.at("image_id").get<std::string>();
  d.image_width = j.at("image_size").at(0).get<double>();
  d.image_height = j.at("image_size").at(1).get<double>();
  if (d.image_width <= 0 || d.image_height <= 0)
    throw std::runtime_error("detection set " + d.image_id +
                             ": non-positive image size");
  size_t feat_len = 0;
  for (const auto& det : j.at("detections")) {
    const auto& bb = det.at("bbox");
    d.boxes.push_back({bb.at(0).get<double>(), bb.at(1).get<double>(),
                       bb.at(2).get<double>(), bb.at(3).get<double>()});
    std::vector<double> f = det.at("feature").get<std::vector<double>>();
    if (d.features.empty())
      feat_len = f.size();
    else if (f.size() != feat_len)
      throw std::runtime_error("detection set " + d.image_id +
                               ": inconsistent feature lengths");
    d.features.push_back(std::move(f));
  }
  return d;
}

/// Visual graph: node features are RoI feature + normalized box (4 values),
/// edges are binary IoU-thresholded connections with self-loops on valid
/// nodes. Padded rows are zero and masked out.
template <class R = double>
struct VisualGraph {
  Tensor<R> nodes;               // K1 x (d_roi + 4)
  Tensor<R> edges;               // K1 x K1, symmetric binary
  std::vector<uint8_t> node_mask;  // length K1
};

template <class R = double>
VisualGraph<R> build_visual_graph(const DetectionSet& d, double iou_threshold,
                                  int k1) {
  if (iou_threshold < 0.0 || iou_threshold > 1.0)
    throw std::invalid_argument("build_visual_graph: threshold outside [0,1]");
  if (d.boxes.empty())
    throw std::invalid_argument("build_visual_graph: empty detection set");
  if (d.boxes.size() != d.features.size())
    throw std::invalid_argument("build_visual_graph: boxes/features differ");
  int n = std::min<int>(static_cast<int>(d.boxes.size()), k1);
  int d_roi = static_cast<int>(d.features[0].size());

  VisualGraph<R> g;
  g.nodes = Tensor<R>(k1, d_roi + 4);
  g.edges = Tensor<R>(k1, k1);
  g.node_mask.assign(k1, 0);
  for (int i = 0; i < n; ++i) {
    g.node_mask[i] = 1;
    for (int j = 0; j < d_roi; ++j)
      g.nodes.at(i, j) = static_cast<R>(d.features[i][j]);
    const BoundingBox& b = d.boxes[i];
    g.nodes.at(i, d_roi + 0) = static_cast<R>(b.x1 / d.image_width);
    g.nodes.at(i, d_roi + 1) = static_cast<R>(b.y1 / d.image_height);
    g.nodes.at(i, d_roi + 2) = static_cast<R>(b.x2 / d.image_width);
    g.nodes.at(i, d_roi + 3) = static_cast<R>(b.y2 / d.image_height);
  }
  for (int i = 0; i < n; ++i) {
    g.edges.at(i, i) = R(1);  // self-loop keeps every valid degree >= 1
    for (int j = i + 1; j < n; ++j) {
      if (iou(d.boxes[i], d.boxes[j]) > iou_threshold) {  // strict
        g.edges.at(i, j) = R(1);
        g.edges.at(j, i) = R(1);
      }
    }
  }
  return g;
}

}  // namespace gma

#endif  // GMA_VISUAL_GRAPH_HPP
