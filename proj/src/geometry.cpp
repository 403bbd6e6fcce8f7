#include "lnkit/geometry.hpp"

namespace lnkit {

namespace {

template <class... Fs>
struct Overloaded : Fs... {
  using Fs::operator()...;
};
template <class... Fs>
Overloaded(Fs...) -> Overloaded<Fs...>;

nlohmann::json dims_json(const Dims& d) { return {d[0], d[1], d[2]}; }
nlohmann::json vec_json(const Vec3& v) { return {v[0], v[1], v[2]}; }

Dims dims_from(const nlohmann::json& j) {
  require(j.is_array() && j.size() == 3, ErrorCode::Format, "expected 3-element dims array");
  return {j[0].get<std::int64_t>(), j[1].get<std::int64_t>(), j[2].get<std::int64_t>()};
}
Vec3 vec_from(const nlohmann::json& j) {
  require(j.is_array() && j.size() == 3, ErrorCode::Format, "expected 3-element vector");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

}  // namespace

Dims step_input_dims(const GeometryStep& step) {
  return std::visit([](const auto& s) { return s.from_dims; }, step);
}

Dims step_output_dims(const GeometryStep& step) {
  return std::visit(Overloaded{[](const ResampleStep& s) { return s.to_dims; },
                               [](const CropStep& s) { return s.box.extent(); },
                               [](const ResizeStep& s) { return s.to_dims; }},
                    step);
}

Dims GeometryRecord::forward_dims() const {
  Dims current = original_dims;
  for (std::size_t i = 0; i < steps.size(); ++i) {
    require(step_input_dims(steps[i]) == current, ErrorCode::InvalidArgument,
            "geometry record step " + std::to_string(i) + " expects " +
                to_string(step_input_dims(steps[i])) + " but receives " + to_string(current));
    if (const auto* c = std::get_if<CropStep>(&steps[i])) {
      require(c->box.fits_in(current), ErrorCode::InvalidArgument,
              "geometry record crop box outside grid");
    }
    current = step_output_dims(steps[i]);
  }
  return current;
}

nlohmann::json to_json(const GeometryRecord& record) {
  nlohmann::json steps = nlohmann::json::array();
  for (const auto& step : record.steps) {
    steps.push_back(std::visit(
        Overloaded{[](const ResampleStep& s) {
                     return nlohmann::json{{"type", "resample"},
                                           {"from_dims", dims_json(s.from_dims)},
                                           {"from_spacing", vec_json(s.from_spacing)},
                                           {"to_dims", dims_json(s.to_dims)},
                                           {"to_spacing", vec_json(s.to_spacing)}};
                   },
                   [](const CropStep& s) {
                     return nlohmann::json{
                         {"type", "crop"},
                         {"from_dims", dims_json(s.from_dims)},
                         {"box_min", {s.box.lo.x, s.box.lo.y, s.box.lo.z}},
                         {"box_max", {s.box.hi.x, s.box.hi.y, s.box.hi.z}}};
                   },
                   [](const ResizeStep& s) {
                     return nlohmann::json{{"type", "resize"},
                                           {"from_dims", dims_json(s.from_dims)},
                                           {"from_spacing", vec_json(s.from_spacing)},
                                           {"to_dims", dims_json(s.to_dims)}};
                   }},
        step));
  }
  nlohmann::json j{{"original_dims", dims_json(record.original_dims)},
                   {"original_spacing", vec_json(record.original_spacing)},
                   {"original_origin", vec_json(record.original_origin)},
                   {"steps", steps}};
  if (record.intensity_window_hu) {
    j["intensity_window_hu"] = {(*record.intensity_window_hu)[0], (*record.intensity_window_hu)[1]};
  }
  return j;
}

GeometryRecord geometry_record_from_json(const nlohmann::json& j) {
  try {
    GeometryRecord record;
    record.original_dims = dims_from(j.at("original_dims"));
    record.original_spacing = vec_from(j.at("original_spacing"));
    record.original_origin = vec_from(j.at("original_origin"));
    for (const auto& s : j.at("steps")) {
      const auto type = s.at("type").get<std::string>();
      if (type == "resample") {
        record.steps.emplace_back(ResampleStep{dims_from(s.at("from_dims")),
                                               vec_from(s.at("from_spacing")),
                                               dims_from(s.at("to_dims")),
                                               vec_from(s.at("to_spacing"))});
      } else if (type == "crop") {
        const Dims lo = dims_from(s.at("box_min"));
        const Dims hi = dims_from(s.at("box_max"));
        record.steps.emplace_back(CropStep{dims_from(s.at("from_dims")),
                                           {{lo[0], lo[1], lo[2]}, {hi[0], hi[1], hi[2]}}});
      } else if (type == "resize") {
        record.steps.emplace_back(ResizeStep{dims_from(s.at("from_dims")),
                                             vec_from(s.at("from_spacing")),
                                             dims_from(s.at("to_dims"))});
      } else {
        fail(ErrorCode::Format, "unknown geometry step type '" + type + "'");
      }
    }
    if (j.contains("intensity_window_hu")) {
      const auto& w = j.at("intensity_window_hu");
      record.intensity_window_hu = std::array<double, 2>{w.at(0).get<double>(), w.at(1).get<double>()};
    }
    record.forward_dims();
    return record;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::Format, std::string("malformed geometry record: ") + e.what());
  }
}

}  // namespace lnkit
