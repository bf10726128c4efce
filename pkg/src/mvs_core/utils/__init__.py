# Empty file to enable Python to treat the directory as a package.
