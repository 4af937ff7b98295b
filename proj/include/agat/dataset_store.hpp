#pragma once

#include <string>

#include "agat/data.hpp"

namespace agat {

// Dataset directory layout:
//   <dir>/spec.cfg            serialized DatasetSpec
//   <dir>/manifest.jsonl      one record per sample (id, domain, paths, seed,
//                             object boxes, placement stats)
//   <dir>/images/<id>.ppm     lossless 8-bit pixels
//   <dir>/labels/<id>.pgm     0/255 class labels
//   <dir>/class_balance.json  per-domain class pixel percentages

void save_dataset(const std::string& dir, const ToyDatasets& data, const DatasetSpec& spec);

// Single-domain variant (used for translated datasets).
void save_domain_dataset(const std::string& dir, const DomainDataset& data, const DatasetSpec& spec);

ToyDatasets load_dataset(const std::string& dir, DatasetSpec* spec_out = nullptr);
DomainDataset load_domain_dataset(const std::string& dir, Domain domain, DatasetSpec* spec_out = nullptr);

bool dataset_dir_valid(const std::string& dir);
std::string dataset_manifest_hash(const std::string& dir);

}  // namespace agat
