#include <iostream>
#include <sstream>

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "tablequake/attention.hpp"
#include "tablequake/cli.hpp"
#include "tablequake/error.hpp"
#include "tablequake/io.hpp"
#include "tablequake/metrics.hpp"
#include "tablequake/perturbation.hpp"
#include "tablequake/pipeline.hpp"
#include "tablequake/run_store.hpp"
#include "tablequake/spearman.hpp"
#include "tablequake/table.hpp"

namespace py = pybind11;
using namespace tablequake;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;

AttentionTrace trace_from_array(const FloatArray& a, bool causal, std::optional<std::size_t> prompt_len) {
  if (a.ndim() != 4 || a.shape(2) != a.shape(3))
    throw Error(Errc::BadShape, "expected an array of shape (layers, heads, n, n)");
  std::vector<float> data(a.data(), a.data() + a.size());
  return AttentionTrace(static_cast<std::size_t>(a.shape(0)), static_cast<std::size_t>(a.shape(1)),
                        static_cast<std::size_t>(a.shape(2)), std::move(data), causal, prompt_len);
}

FloatArray trace_to_array(const AttentionTrace& t) {
  FloatArray out({t.layers(), t.heads(), t.seq_len(), t.seq_len()});
  std::copy(t.data().begin(), t.data().end(), out.mutable_data());
  return out;
}

py::array_t<double> grid_to_array(const HeadGrid& g) {
  py::array_t<double> out({g.layers, g.heads});
  std::copy(g.values.begin(), g.values.end(), out.mutable_data());
  return out;
}

py::tuple spearman_tuple(const SpearmanResult& r) {
  return py::make_tuple(r.rho ? py::cast(*r.rho) : py::none(), r.p ? py::cast(*r.p) : py::none());
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Table perturbation, scoring and attention-entropy analysis";

  static py::exception<Error> error_type(m, "TablequakeError", PyExc_ValueError);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      if (e.is_io()) PyErr_SetString(PyExc_OSError, e.what());
      else py::set_error(error_type, e.what());
    }
  });

  py::class_<Table>(m, "Table")
      .def(py::init<Row, std::vector<Row>>(), py::arg("header"), py::arg("rows"))
      .def_property_readonly("header", &Table::header)
      .def_property_readonly("rows", &Table::rows)
      .def_property_readonly("num_rows", &Table::num_rows)
      .def_property_readonly("num_columns", &Table::num_columns)
      .def("cell_count", [](const Table& t) { return cell_count(t); })
      .def("render_pipe", [](const Table& t) { return render_pipe(t); })
      .def("render_csv", [](const Table& t) { return render_csv(t); })
      .def("__eq__", [](const Table& a, const Table& b) { return a == b; })
      .def("__repr__", [](const Table& t) {
        return "Table(" + std::to_string(t.num_columns()) + " columns, " +
               std::to_string(t.num_rows()) + " rows)";
      });

  m.def("parse_table", [](std::string_view text, std::string_view format) {
    if (format != "csv" && format != "json")
      throw Error(Errc::InvalidArgument, "format must be 'csv' or 'json'");
    return parse_table(text, format == "csv" ? TableFormat::Csv : TableFormat::Json);
  }, py::arg("text"), py::arg("format") = "csv");

  m.def("transpose", &transpose);
  m.def("row_swap", &row_swap, py::arg("table"), py::arg("seed"));
  m.def("column_swap", &column_swap, py::arg("table"), py::arg("seed"));
  m.def("transpose_row_swap", &transpose_row_swap, py::arg("table"), py::arg("seed"));
  m.def("transpose_col_swap", &transpose_col_swap, py::arg("table"), py::arg("seed"));
  m.def("apply_structural", [](const Table& t, std::string_view kind, std::uint64_t seed) {
    return apply_structural(t, kind_from_name(kind), seed);
  }, py::arg("table"), py::arg("kind"), py::arg("seed"));

  m.def("normalize_answer", &normalize_answer);
  m.def("exact_match", [](std::string_view pred, const std::vector<std::string>& targets) {
    return exact_match(pred, targets);
  }, py::arg("prediction"), py::arg("targets"));
  m.def("f1", [](std::string_view pred, const std::vector<std::string>& targets) {
    return f1(pred, targets);
  }, py::arg("prediction"), py::arg("targets"));
  m.def("emd", &emd, py::arg("em_perturbed"), py::arg("em_original"));
  m.def("variation_percentage", [](const std::vector<std::pair<int, int>>& pairs) {
    std::vector<OutcomePair> v;
    for (const auto& [o, p] : pairs) v.push_back({o, p});
    return variation_percentage(v);
  }, py::arg("pairs"));

  m.def("row_entropy", [](const std::vector<double>& p) { return row_entropy(p); });
  m.def("head_entropy_profile",
        [](const FloatArray& a, bool normalize, std::string_view positions,
           std::optional<std::size_t> prompt_len) {
          if (positions != "prompt" && positions != "all")
            throw Error(Errc::InvalidArgument, "positions must be 'prompt' or 'all'");
          const auto trace = trace_from_array(a, false, prompt_len);
          EntropyOptions opts{normalize,
                              positions == "all" ? PositionPolicy::All : PositionPolicy::Prompt};
          return grid_to_array(head_entropy_profile(trace, opts).grid);
        },
        py::arg("attention"), py::arg("normalize") = false, py::arg("positions") = "prompt",
        py::arg("prompt_len") = py::none());

  m.def("spearman", [](const std::vector<double>& x, const std::vector<double>& y) {
    return spearman_tuple(spearman(x, y));
  }, py::arg("x"), py::arg("y"));

  m.def("fnv1a64", [](py::bytes b) { return fnv1a64(std::string(b)); });
  m.def("fnv1a64", [](std::string_view s) { return fnv1a64(s); });

  m.def("read_trace", [](const std::filesystem::path& path) {
    const auto t = read_trace(path);
    py::dict meta;
    meta["causal"] = t.causal();
    meta["prompt_len"] = t.prompt_len();
    return py::make_tuple(trace_to_array(t), meta);
  }, py::arg("path"));
  m.def("write_trace",
        [](const std::filesystem::path& path, const FloatArray& a, bool causal,
           std::optional<std::size_t> prompt_len) {
          write_trace(path, trace_from_array(a, causal, prompt_len));
        },
        py::arg("path"), py::arg("attention"), py::arg("causal") = false,
        py::arg("prompt_len") = py::none());

  // JSON-lines text in, canonical JSON-lines text out; the Python wrapper
  // handles dict conversion.
  m.def("_canonical_records", [](std::string_view jsonl) {
    return encode_records(decode_records(jsonl));
  });
  m.def("_canonical_prompts", [](std::string_view jsonl) {
    return pipeline::encode_prompts(pipeline::decode_prompts(jsonl));
  });

  m.def("simulate",
        [](const std::filesystem::path& config, const std::filesystem::path& instances,
           const std::filesystem::path& out_dir) {
          pipeline::SimulateOptions opts;
          opts.config = mock_config_from_json(nlohmann::json::parse(io::read_file(config)));
          opts.instances = instances;
          opts.out_dir = out_dir;
          const auto s = pipeline::simulate(opts);
          py::dict d;
          d["instances"] = s.instances;
          d["records"] = s.records;
          const auto& r = s.scatter_result;
          d["rho"] = r.rho ? py::cast(*r.rho) : py::none();
          d["p"] = r.p ? py::cast(*r.p) : py::none();
          return d;
        },
        py::arg("config"), py::arg("instances"), py::arg("out_dir"));

  m.def("main", [](const std::vector<std::string>& args) {
    std::ostringstream out, err;
    const int code = cli::dispatch(args, out, err);
    py::print(out.str(), py::arg("end") = "");
    if (!err.str().empty())
      py::print(err.str(), py::arg("end") = "", py::arg("file") = py::module_::import("sys").attr("stderr"));
    return code;
  }, py::arg("args"));
}
