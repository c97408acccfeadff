"""
Services package for the disentanglement toolkit
Contains the tensor engine, model, training and evaluation logic
"""
