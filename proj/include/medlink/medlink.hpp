#pragma once

#include "medlink/align.hpp"
#include "medlink/corpus.hpp"
#include "medlink/embed_store.hpp"
#include "medlink/error.hpp"
#include "medlink/eval.hpp"
#include "medlink/kg_store.hpp"
#include "medlink/linalg.hpp"
#include "medlink/linker.hpp"
#include "medlink/matchers.hpp"
#include "medlink/node2vec.hpp"
#include "medlink/random.hpp"
#include "medlink/string_metrics.hpp"
#include "medlink/target_index.hpp"
#include "medlink/text.hpp"
#include "medlink/types.hpp"
