#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "autoevol/analysis.hpp"
#include "autoevol/cli.hpp"
#include "autoevol/data_model.hpp"
#include "autoevol/errors.hpp"
#include "autoevol/failure_detection.hpp"
#include "autoevol/gateway.hpp"
#include "autoevol/prompts.hpp"

namespace py = pybind11;
using namespace autoevol;

namespace {

nlohmann::json to_json_value(const py::handle& obj) {
  const auto text = py::module_::import("json").attr("dumps")(obj).cast<std::string>();
  return nlohmann::json::parse(text);
}

py::object from_json_value(const nlohmann::json& j) {
  return py::module_::import("json").attr("loads")(j.dump());
}

std::vector<InstructionRecord> records_from(const py::list& items) {
  std::vector<InstructionRecord> out;
  for (const auto& item : items) out.push_back(record_from_json(to_json_value(item)));
  return out;
}

py::list records_to(const std::vector<InstructionRecord>& records) {
  py::list out;
  for (const auto& r : records) out.append(from_json_value(to_json(r)));
  return out;
}

}  // namespace

PYBIND11_MODULE(_autoevol, m) {
  m.doc() = "Evolving-method optimization and instruction dataset tooling";
  py::register_exception<Error>(m, "AutoevolError");

  m.def("classify", [](const std::string& response) {
    const auto v = classify(response);
    py::dict d;
    d["failed"] = v.failed;
    d["category"] = to_string(v.category);
    d["matched_rule"] = v.matched_rule;
    return d;
  }, py::arg("response"));

  m.def("failure_rate", [](const std::vector<bool>& failed) {
    std::vector<FailureVerdict> v(failed.size());
    for (std::size_t i = 0; i < failed.size(); ++i) {
      if (failed[i]) v[i] = {true, FailureCategory::StagnantComplexity, "external"};
    }
    return failure_rate(v, v.size());
  }, py::arg("failed"));

  m.def("estimate_cost", [](std::uint64_t datasize, std::uint64_t rounds, std::uint64_t steps,
                            std::uint64_t batch_size, std::uint64_t trajectory_rounds,
                            std::uint64_t samples, std::uint64_t dev_size) {
    const OptimizationBudget b{steps, batch_size, trajectory_rounds, samples, dev_size};
    return from_json_value(estimate_cost(datasize, rounds, b).to_json());
  }, py::arg("datasize"), py::arg("rounds") = 1, py::arg("steps") = 10, py::arg("batch_size") = 10,
     py::arg("trajectory_rounds") = 1, py::arg("samples") = 5, py::arg("dev_size") = 50);

  m.def("extract_final_instruction", [](const std::string& output, const std::string& marker) {
    const auto r = extract_final_instruction(output, marker);
    return py::make_tuple(r.text, r.format_warning);
  }, py::arg("output"), py::arg("marker") = std::string(kDefaultMarker));

  m.def("tokenize", [](const std::string& text) { return tokenize(text); }, py::arg("text"));

  m.def("contamination_check", [](const py::list& records, const std::vector<std::string>& tests,
                                  std::size_t n) {
    const auto recs = records_from(records);
    return from_json_value(contamination_check(recs, tests, n).to_json());
  }, py::arg("records"), py::arg("test_set"), py::arg("n") = 13);

  m.def("tag_metrics", [](const py::list& records, const TagTable& tags, const std::string& mode) {
    const auto recs = records_from(records);
    const auto dm = mode == "per_record" ? DiversityMode::PerRecordUnique : DiversityMode::DatasetDistinct;
    const auto mt = tag_metrics(recs, tags, dm);
    return py::make_tuple(mt.complexity, mt.diversity);
  }, py::arg("records"), py::arg("tags"), py::arg("diversity") = "dataset");

  m.def("load_dataset", [](const std::filesystem::path& p) { return records_to(load_dataset(p)); },
        py::arg("path"));
  m.def("save_dataset", [](const std::filesystem::path& p, const py::list& records) {
    save_dataset(p, records_from(records));
  }, py::arg("path"), py::arg("records"));

  m.def("run_cli", [](const std::vector<std::string>& args) {
    std::vector<std::string> full = {"autoevol"};
    full.insert(full.end(), args.begin(), args.end());
    std::ostringstream out, err;
    int code = 0;
    {
      py::gil_scoped_release release;
      code = run_cli(full, out, err);
    }
    return py::make_tuple(code, out.str(), err.str());
  }, py::arg("args"));
}
