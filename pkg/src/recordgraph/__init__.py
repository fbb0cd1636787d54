"""Graph-of-records retrieval for long-document summarization.

LLM responses produced while answering simulated queries are linked to the
chunks they were generated from; a graph attention network trained against
BERTScore rankings then supplies node embeddings for retrieval.
"""
from recordgraph.corpus import Chunk, Document, load_documents, split_chunks, tokenize
from recordgraph.kernels import BACKEND as KERNEL_BACKEND
from recordgraph.providers import EmbeddingProvider, LlmClient, TokenEmbedder
from recordgraph.records import GraphOfRecords, build_graph, load_graph, save_graph

__all__ = [
    "Chunk",
    "Document",
    "EmbeddingProvider",
    "GraphOfRecords",
    "KERNEL_BACKEND",
    "LlmClient",
    "TokenEmbedder",
    "build_graph",
    "load_documents",
    "load_graph",
    "save_graph",
    "split_chunks",
    "tokenize",
]
__version__ = "0.1.0"
