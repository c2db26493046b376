#pragma once

#include <optional>
#include <string>
#include <utility>

#include "batt/dataset.hpp"

namespace batt {

// CIFAR-10 binary batches: data_batch_1..5.bin plus test_batch.bin, each
// 10000 records of [label u8, 1024 R, 1024 G, 1024 B] bytes. Intensities are
// byte/255, order preserved, K = 10.
std::pair<Dataset, Dataset> load_cifar10_binary(const std::string& directory);

// Single file in the CIFAR-10 record layout (any record count).
Dataset load_cifar10_file(const std::string& path, Split split);

// IDX image/label pair (big-endian magics 0x803 / 0x801). Single-channel,
// byte/255. K is max label + 1 unless overridden.
Dataset load_idx(const std::string& images_path, const std::string& labels_path,
                 Split split, std::optional<int> num_classes = std::nullopt);

// BATTDS container, byte-exact round trip including poison flags and order.
// Layout (little-endian): "BATT" magic, u32 version=1, u32 N, u32 C, u32 H,
// u32 W, u32 K, u8 split, N x [u16 label, u8 flag, C*H*W f32], u64 FNV-1a
// checksum of all preceding bytes.
void write_battds(const Dataset& dataset, const std::string& path);
Dataset read_battds(const std::string& path);

// Directory of images listed by a manifest CSV of "relative_path,label"
// rows. Images are decoded (PNM formats), replicated to 3 channels and
// resized to 3 x target_h x target_w. Per-row failures are collected into a
// single error report.
Dataset load_image_dir(const std::string& directory,
                       const std::string& manifest_csv, Split split,
                       int num_classes, int target_h = 32, int target_w = 32);

// Sidecar path for a BATTDS file: "<stem>.manifest.json".
std::string manifest_path_for(const std::string& battds_path);

}  // namespace batt
