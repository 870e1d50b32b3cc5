"""
Library core for polyp detection under endoscopic artifacts
"""
