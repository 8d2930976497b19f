#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "sbsim/channel.h"
#include "sbsim/dsl.h"
#include "sbsim/engine.h"
#include "sbsim/fuzzer.h"
#include "sbsim/machine.h"
#include "sbsim/microcode_lab.h"
#include "sbsim/table.h"

namespace py = pybind11;

namespace sbsim {
namespace {

MicrocodeProfile ProfileOrThrow(std::uint32_t revision) {
  auto p = FindBuiltinProfile(revision);
  if (!p) throw py::value_error("unknown microcode profile " +
                                FormatRevision(revision));
  return *p;
}

ExperimentConfig ConfigFor(std::uint32_t revision) {
  ExperimentConfig c;
  c.profile = ProfileOrThrow(revision);
  return c;
}

PrepOp PrepOrThrow(const std::string& text) {
  auto p = ParsePrepOp(text);
  if (!p) throw py::value_error("prep must be none, clflush or lockinc");
  return *p;
}

FaultClass FaultOrThrow(const std::string& text) {
  if (text == "us") return FaultClass::kUS;
  if (text == "pk") return FaultClass::kPK;
  if (text == "np") return FaultClass::kNP;
  if (text == "none") return FaultClass::kNone;
  throw py::value_error("fault must be us, pk, np or none");
}

py::dict ReportDict(const LeakageReport& r) {
  py::dict d;
  d["secret_len"] = r.secret_len;
  d["attempts"] = r.attempts;
  d["forwarded_attempts"] = r.forwarded_attempts;
  d["sim_cycles"] = r.sim_cycles;
  d["correct"] = r.correct;
  d["rate"] = r.rate;
  py::list recovered;
  for (const auto& b : r.recovered) {
    recovered.append(py::make_tuple(b.position, b.value, b.confidence));
  }
  d["recovered"] = recovered;
  return d;
}

}  // namespace
}  // namespace sbsim

PYBIND11_MODULE(sbsim, m) {
  using namespace sbsim;
  m.doc() = "Store-buffer leak simulator";

  py::register_exception<DslError>(m, "DslError", PyExc_ValueError);
  py::register_exception<SimError>(m, "SimError", PyExc_RuntimeError);
  py::register_exception<SnapshotError>(m, "SnapshotError", PyExc_ValueError);

  m.def("profiles", [] {
    py::list out;
    for (const auto& p : BuiltinMicrocodeProfiles()) {
      out.append(py::make_tuple(FormatRevision(p.revision), FormatDate(p.date),
                                !p.forwarding_mitigated));
    }
    return out;
  }, "(revision, date, vulnerable) for every built-in microcode profile");

  m.def("classify_access",
        [](bool present, bool user_accessible, bool key_denied) {
          PageTable t;
          PageMapping pm;
          pm.vaddr = 0x1000;
          pm.present = present;
          pm.user_accessible = user_accessible;
          pm.key_denied = key_denied;
          t.Map(pm);
          return std::string(ToString(ClassifyAccess(t, 0x1000, true)));
        },
        py::arg("present"), py::arg("user_accessible"), py::arg("key_denied"));

  m.def("canonical_program",
        [](const std::string& prep, const std::string& fault) {
          return SerializeProgram(
              CanonicalMsbdsProgram(PrepOrThrow(prep), FaultOrThrow(fault)));
        },
        py::arg("prep"), py::arg("fault"));

  m.def("normalize_program",
        [](const std::string& text) {
          return SerializeProgram(ParseProgram(text));
        },
        py::arg("text"), "Parses a program and serializes it again");

  m.def("generate_secret", &GenerateSecret, py::arg("length"),
        py::arg("seed"));

  m.def("run_experiment",
        [](std::uint32_t revision, const std::string& program,
           const std::vector<std::uint8_t>& secret, Cycle budget,
           std::uint64_t seed) {
          const AttackProgram p = ParseProgram(program);
          LeakageReport r;
          {
            py::gil_scoped_release release;
            r = RunExperiment(ConfigFor(revision), p, secret, budget, seed);
          }
          return ReportDict(r);
        },
        py::arg("revision"), py::arg("program"), py::arg("secret"),
        py::arg("budget"), py::arg("seed") = 0);

  m.def("calibrate_threshold",
        [](const std::vector<double>& hits, const std::vector<double>& misses) {
          return CalibrateThreshold(hits, misses);
        },
        py::arg("hits"), py::arg("misses"));

  m.def("decode_byte",
        [](const std::vector<double>& latencies, double threshold) {
          if (latencies.size() != kProbeSlots) {
            throw py::value_error("need 256 latencies");
          }
          Latencies l;
          std::copy(latencies.begin(), latencies.end(), l.begin());
          const DecodeResult r = DecodeByte(l, threshold);
          return py::make_tuple(r.value, r.ambiguous);
        },
        py::arg("latencies"), py::arg("threshold"),
        "Returns (value or None, ambiguous)");

  m.def("fuzz",
        [](std::uint32_t revision, std::uint64_t max_iters, std::uint64_t seed,
           int jobs) {
          FuzzOptions o;
          o.jobs = jobs;
          FuzzReport r;
          {
            py::gil_scoped_release release;
            r = FuzzLoop(ConfigFor(revision), o, max_iters, seed);
          }
          return FuzzReportToJson(r);
        },
        py::arg("revision"), py::arg("max_iters") = 10000, py::arg("seed") = 0,
        py::arg("jobs") = 1, "Returns the JSON report");

  m.def("table_csv",
        [](Cycle budget, std::size_t secret_len, std::uint64_t seed, int jobs) {
          TableOptions o;
          o.budget = budget;
          o.secret_len = secret_len;
          o.seed = seed;
          o.jobs = jobs;
          std::vector<TableRow> rows;
          {
            py::gil_scoped_release release;
            rows = BuildTable(o);
          }
          return FormatTableCsv(rows);
        },
        py::arg("budget"), py::arg("secret_len") = 64, py::arg("seed") = 0,
        py::arg("jobs") = 1);

  m.def("assess",
        [](const std::string& snapshot_text) {
          const Assessment a = Assess(ParseSnapshot(snapshot_text));
          py::dict d;
          d["status"] = std::string(ToString(a.status));
          d["errata_057"] = a.errata_057;
          d["rationale"] = a.rationale;
          return d;
        },
        py::arg("snapshot_text"));
}
