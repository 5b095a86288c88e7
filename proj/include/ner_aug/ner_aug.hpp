#pragma once

#include "ner_aug/common.hpp"
#include "ner_aug/corpus.hpp"
#include "ner_aug/decoder.hpp"
#include "ner_aug/entity_ops.hpp"
#include "ner_aug/marker.hpp"
#include "ner_aug/oracle.hpp"
#include "ner_aug/pipeline.hpp"
#include "ner_aug/scorer.hpp"
#include "ner_aug/wire.hpp"
