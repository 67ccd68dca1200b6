#include "tailspin/tailspin.h"

#include <exception>
#include <filesystem>
#include <memory>
#include <new>
#include <string>

#include "tailspin/commands.hpp"
#include "tailspin/config.hpp"
#include "tailspin/error.hpp"
#include "tailspin/io.hpp"
#include "tailspin/losses.hpp"
#include "tailspin/optim.hpp"
#include "tailspin/pipeline.hpp"

struct tsp_config {
  tailspin::ExperimentConfig config;
  std::string scratch;
};

struct tsp_dataset {
  tailspin::Dataset data;
};

namespace {

thread_local std::string last_error;
thread_local std::string last_report;

tsp_status status_of(tailspin::ErrorKind kind) {
  using tailspin::ErrorKind;
  switch (kind) {
    case ErrorKind::config: return TSP_CONFIG_ERROR;
    case ErrorKind::dimension: return TSP_DIMENSION_ERROR;
    case ErrorKind::numeric: return TSP_NUMERIC_ERROR;
    case ErrorKind::domain: return TSP_DOMAIN_ERROR;
    case ErrorKind::precondition: return TSP_PRECONDITION_ERROR;
    case ErrorKind::tape: return TSP_TAPE_ERROR;
    case ErrorKind::io: return TSP_IO_ERROR;
    case ErrorKind::oracle: return TSP_ORACLE_ERROR;
    case ErrorKind::internal: return TSP_INTERNAL_ERROR;
  }
  return TSP_INTERNAL_ERROR;
}

template <class F>
tsp_status guarded(F&& body) {
  try {
    body();
    last_error.clear();
    return TSP_OK;
  } catch (const tailspin::Error& e) {
    last_error = e.what();
    return status_of(e.kind());
  } catch (const std::filesystem::filesystem_error& e) {
    last_error = e.what();
    return TSP_IO_ERROR;
  } catch (const std::bad_alloc&) {
    last_error = "out of memory";
    return TSP_INTERNAL_ERROR;
  } catch (const std::exception& e) {
    last_error = e.what();
    return TSP_INTERNAL_ERROR;
  } catch (...) {
    last_error = "unknown exception";
    return TSP_INTERNAL_ERROR;
  }
}

tsp_status invalid(const char* what) {
  last_error = what;
  return TSP_INVALID_ARGUMENT;
}

}  // namespace

extern "C" {

const char* tsp_status_name(tsp_status status) {
  switch (status) {
    case TSP_OK: return "ok";
    case TSP_CONFIG_ERROR: return "config_error";
    case TSP_DIMENSION_ERROR: return "dimension_error";
    case TSP_NUMERIC_ERROR: return "numeric_error";
    case TSP_DOMAIN_ERROR: return "domain_error";
    case TSP_PRECONDITION_ERROR: return "precondition_error";
    case TSP_TAPE_ERROR: return "tape_error";
    case TSP_IO_ERROR: return "io_error";
    case TSP_ORACLE_ERROR: return "oracle_error";
    case TSP_INTERNAL_ERROR: return "internal_error";
    case TSP_INVALID_ARGUMENT: return "invalid_argument";
  }
  return "unknown_status";
}

const char* tsp_last_error(void) { return last_error.c_str(); }

const char* tsp_version(void) { return "0.1.0"; }

tsp_status tsp_config_load(const char* path, tsp_config** out) {
  if (!out) return invalid("null output pointer");
  *out = nullptr;
  return guarded([&] {
    auto cfg = std::make_unique<tsp_config>();
    cfg->config = tailspin::ExperimentConfig::load(path ? path : "");
    *out = cfg.release();
  });
}

tsp_status tsp_config_set(tsp_config* config, const char* key, const char* value) {
  if (!config || !key || !value) return invalid("null argument");
  return guarded([&] { config->config.set(key, value); });
}

tsp_status tsp_config_override(tsp_config* config, const char* assignment) {
  if (!config || !assignment) return invalid("null argument");
  return guarded([&] { config->config.apply_override(assignment); });
}

tsp_status tsp_config_get(const tsp_config* config, const char* key, const char** value) {
  if (!config || !key || !value) return invalid("null argument");
  return guarded([&] {
    auto* mut = const_cast<tsp_config*>(config);
    mut->scratch = config->config.raw(key);
    *value = mut->scratch.c_str();
  });
}

tsp_status tsp_config_resolved(const tsp_config* config, const char** text) {
  if (!config || !text) return invalid("null argument");
  return guarded([&] {
    auto* mut = const_cast<tsp_config*>(config);
    mut->scratch = config->config.resolved_text();
    *text = mut->scratch.c_str();
  });
}

uint64_t tsp_config_hash(const tsp_config* config) { return config ? config->config.hash() : 0; }

void tsp_config_free(tsp_config* config) { delete config; }

tsp_status tsp_run_command(const char* command, const tsp_config* config, const char** report) {
  if (!command || !config) return invalid("null argument");
  last_report.clear();
  const tsp_status st = guarded([&] { last_report = tailspin::run_command(command, config->config); });
  if (report) *report = last_report.c_str();
  return st;
}

tsp_status tsp_dataset_read(const char* manifest, tsp_dataset** out) {
  if (!manifest || !out) return invalid("null argument");
  *out = nullptr;
  return guarded([&] { *out = new tsp_dataset{tailspin::read_dataset(manifest)}; });
}

tsp_status tsp_dataset_write(const tsp_dataset* dataset, const char* manifest) {
  if (!dataset || !manifest) return invalid("null argument");
  return guarded([&] { tailspin::write_dataset(dataset->data, manifest); });
}

size_t tsp_dataset_size(const tsp_dataset* dataset) { return dataset ? dataset->data.size() : 0; }
size_t tsp_dataset_dim(const tsp_dataset* dataset) { return dataset ? dataset->data.dim() : 0; }
uint32_t tsp_dataset_num_classes(const tsp_dataset* dataset) { return dataset ? dataset->data.num_classes() : 0; }

const float* tsp_dataset_features(const tsp_dataset* dataset) {
  return dataset ? dataset->data.features().data() : nullptr;
}
const uint32_t* tsp_dataset_labels_observed(const tsp_dataset* dataset) {
  return dataset ? dataset->data.labels_observed().data() : nullptr;
}
const uint32_t* tsp_dataset_labels_true(const tsp_dataset* dataset) {
  return dataset ? dataset->data.labels_true().data() : nullptr;
}

void tsp_dataset_free(tsp_dataset* dataset) { delete dataset; }

tsp_status tsp_lambert_w0(double x, double* out) {
  if (!out) return invalid("null output pointer");
  return guarded([&] { *out = tailspin::lambert_w0(x); });
}

tsp_status tsp_superloss_sigma(double loss, double tau, double lambda, int clamp_as_written, double* out) {
  if (!out) return invalid("null output pointer");
  return guarded([&] {
    tailspin::SuperLossParams p;
    p.tau = tau;
    p.lambda = lambda;
    p.clamp = clamp_as_written ? tailspin::ClampMode::as_written : tailspin::ClampMode::lower_bound;
    *out = tailspin::superloss_sigma(loss, p);
  });
}

double tsp_scaled_lr(double base_lr, size_t batch_size) { return tailspin::scaled_lr(base_lr, batch_size); }

tsp_status tsp_lr_at(int cosine, size_t warmup_epochs, size_t total_epochs, size_t epoch, double effective_lr,
                     double* out) {
  if (!out) return invalid("null output pointer");
  return guarded([&] {
    tailspin::ScheduleConfig s;
    s.kind = cosine ? tailspin::ScheduleKind::cosine : tailspin::ScheduleKind::constant;
    s.warmup_epochs = warmup_epochs;
    s.total_epochs = total_epochs;
    *out = tailspin::lr_at(s, epoch, effective_lr);
  });
}

tsp_status tsp_select_freeze_policy(const char* method, double nu, int* last_layer_only) {
  if (!method || !last_layer_only) return invalid("null argument");
  return guarded([&] {
    const auto policy = tailspin::select_freeze_policy(tailspin::parse_ssl_method(method), nu);
    *last_layer_only = policy == tailspin::FreezePolicy::last_layer_only ? 1 : 0;
  });
}

}  // extern "C"
